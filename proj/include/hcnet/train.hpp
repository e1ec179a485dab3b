#pragma once

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hcnet/checkpoint.hpp"
#include "hcnet/dataset.hpp"
#include "hcnet/model.hpp"
#include "hcnet/optimizer.hpp"

namespace hcnet {

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double eval_acc = 0;  // nan when no eval split was given
};

inline std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,lr,train_loss,train_acc,eval_acc\n";
  for (const auto& m : log)
    os << m.epoch << ',' << m.lr << ',' << m.train_loss << ',' << m.train_acc << ','
       << m.eval_acc << '\n';
  return os.str();
}

inline void write_metrics_csv(const std::vector<EpochMetrics>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file '" + path + "'");
  out << metrics_csv(log);
}

// Places sample `index` on a resolution^2 canvas (centered, background at the
// normalized black level) and optionally mirrors it horizontally.
template <typename T>
Tensor<T> dataset_sample(const Dataset& ds, std::size_t index, std::size_t resolution, bool hflip) {
  if (ds.height > resolution || ds.width > resolution)
    throw ConfigError("dataset samples " + std::to_string(ds.height) + "x" +
                      std::to_string(ds.width) + " exceed the model resolution " +
                      std::to_string(resolution));
  std::size_t C = ds.channels, R = resolution;
  std::vector<T> canvas(C * R * R);
  std::size_t top = (R - ds.height) / 2, left = (R - ds.width) / 2;
  const float* src = ds.image(index);
  for (std::size_t c = 0; c < C; ++c) {
    T background = static_cast<T>((0.0 - ds.stats.mean[c]) / ds.stats.stddev[c]);
    T* plane = canvas.data() + c * R * R;
    std::fill_n(plane, R * R, background);
    for (std::size_t y = 0; y < ds.height; ++y)
      for (std::size_t x = 0; x < ds.width; ++x) {
        std::size_t sx = hflip ? ds.width - 1 - x : x;
        plane[(top + y) * R + (left + x)] = static_cast<T>(src[(c * ds.height + y) * ds.width + sx]);
      }
  }
  return Tensor<T>::from_vector({C, R, R}, std::move(canvas));
}

struct EvalResult {
  double accuracy = 0;
  double mean_loss = 0;
};

template <typename T>
EvalResult evaluate(Model<T>& model, const Dataset& ds, int threads = 1) {
  if (ds.count == 0) throw UsageError("evaluate: dataset is empty");
  NoGradGuard no_grad;
  std::size_t R = static_cast<std::size_t>(model.config.input_resolution);
  std::vector<double> losses(ds.count);
  std::vector<char> hits(ds.count);
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto logits = model.forward_single(dataset_sample<T>(ds, i, R, false));
      losses[i] = static_cast<double>(softmax_cross_entropy(logits, ds.labels[i]).item());
      hits[i] = argmax(logits) == ds.labels[i] ? 1 : 0;
    }
  };
  if (threads <= 1 || ds.count < 2) {
    worker(0, ds.count);
  } else {
    std::size_t n = static_cast<std::size_t>(threads);
    std::size_t chunk = (ds.count + n - 1) / n;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n && t * chunk < ds.count; ++t)
      pool.emplace_back(worker, t * chunk, std::min(ds.count, (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }
  EvalResult r;
  for (std::size_t i = 0; i < ds.count; ++i) {
    r.mean_loss += losses[i];
    r.accuracy += hits[i];
  }
  r.mean_loss /= double(ds.count);
  r.accuracy /= double(ds.count);
  return r;
}

// Supervised training driver. Owns the optimizer and the run RNG so a
// checkpoint can capture and restore the full training state.
template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, const TrainConfig& cfg)
      : model_(model), cfg_(cfg),
        optimizer_(cfg.optimizer, model.parameters(), cfg.weight_decay), rng_(cfg.seed) {
    cfg_.validate();
  }

  Optimizer<T>& optimizer() { return optimizer_; }
  Rng& rng() { return rng_; }
  int epoch() const { return epoch_; }

  void restore(checkpoint::Loaded<T>& loaded) {
    if (loaded.has_optimizer) {
      if (loaded.optimizer_kind != cfg_.optimizer)
        throw ConfigError("checkpoint optimizer " + to_string(loaded.optimizer_kind) +
                          " does not match configured " + to_string(cfg_.optimizer));
      optimizer_.state() = std::move(loaded.optimizer_state);
    }
    if (!loaded.rng_state.empty()) rng_.deserialize(loaded.rng_state);
    epoch_ = static_cast<int>(loaded.epoch);
  }

  // Trains until cfg.epochs (or cfg.max_steps); returns one metrics row per
  // epoch touched.
  std::vector<EpochMetrics> run(const Dataset& train_set, const Dataset* eval_set,
                                std::ostream* progress = nullptr) {
    std::vector<EpochMetrics> log;
    if (train_set.count == 0) throw UsageError("training set is empty");
    std::size_t R = static_cast<std::size_t>(model_.config.input_resolution);
    std::size_t steps_per_epoch =
        (train_set.count + cfg_.batch_size - 1) / static_cast<std::size_t>(cfg_.batch_size);
    std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg_.epochs);
    std::size_t warmup_steps = steps_per_epoch * static_cast<std::size_t>(cfg_.warmup_epochs);
    std::size_t global_step = steps_per_epoch * static_cast<std::size_t>(epoch_);
    std::size_t steps_done = 0;
    bool stop = false;

    std::vector<std::size_t> order(train_set.count);
    for (int e = epoch_; e < cfg_.epochs && !stop; ++e) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng_.shuffle(order);

      double loss_sum = 0;
      std::size_t seen = 0, correct = 0;
      double lr = 0;
      for (std::size_t b = 0; b < steps_per_epoch && !stop; ++b) {
        std::size_t begin = b * cfg_.batch_size;
        std::size_t end = std::min(train_set.count, begin + cfg_.batch_size);
        std::vector<std::size_t> batch(order.begin() + begin, order.begin() + end);
        std::vector<bool> flips(batch.size(), false);
        if (cfg_.augment_hflip)
          for (std::size_t i = 0; i < batch.size(); ++i) flips[i] = rng_.bernoulli(0.5);

        lr = schedule_lr(cfg_.schedule, cfg_.base_lr, global_step, total_steps, warmup_steps);
        double batch_loss;
        std::size_t batch_correct;
        if (cfg_.threads > 1)
          step_parallel(train_set, batch, flips, R, batch_loss, batch_correct);
        else
          step_serial(train_set, batch, flips, R, batch_loss, batch_correct);

        if (!std::isfinite(batch_loss))
          throw NumericError("non-finite loss at epoch " + std::to_string(e) + ", batch " +
                             std::to_string(b) + " (lr=" + std::to_string(lr) + "); aborting");
        optimizer_.step(lr);
        if (cfg_.clamp_stencil_nonneg)
          for (auto& stage : model_.stages)
            for (auto& block : stage) optimizer_.clamp_nonneg(block.hc.stencil_w);
        optimizer_.zero_grad();

        loss_sum += batch_loss * double(batch.size());
        correct += batch_correct;
        seen += batch.size();
        ++global_step;
        ++steps_done;
        if (cfg_.max_steps > 0 && steps_done >= static_cast<std::size_t>(cfg_.max_steps))
          stop = true;
      }

      EpochMetrics m;
      m.epoch = e;
      m.lr = lr;
      m.train_loss = loss_sum / double(seen);
      m.train_acc = double(correct) / double(seen);
      m.eval_acc = std::nan("");
      if (eval_set) m.eval_acc = evaluate(model_, *eval_set, cfg_.threads).accuracy;
      log.push_back(m);
      epoch_ = e + 1;
      if (progress) {
        (*progress) << "epoch " << m.epoch << " lr " << m.lr << " train_loss " << m.train_loss
                    << " train_acc " << m.train_acc << " eval_acc " << m.eval_acc << "\n";
        progress->flush();
      }
    }
    return log;
  }

 private:
  void step_serial(const Dataset& ds, const std::vector<std::size_t>& batch,
                   const std::vector<bool>& flips, std::size_t R, double& loss_out,
                   std::size_t& correct_out) {
    std::vector<Tensor<T>> losses;
    losses.reserve(batch.size());
    correct_out = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto x = dataset_sample<T>(ds, batch[i], R, flips[i]);
      auto logits = model_.forward_single(x);
      if (argmax(logits) == ds.labels[batch[i]]) ++correct_out;
      losses.push_back(softmax_cross_entropy(logits, ds.labels[batch[i]]));
    }
    auto loss = mean_scalars(losses);
    loss_out = static_cast<double>(loss.item());
    if (!std::isfinite(loss_out)) return;  // caller aborts before stepping
    loss.backward();
  }

  // Data-parallel batch path: every worker runs forward/backward on its own
  // parameter clone; gradients merge into the shared parameters in fixed
  // order afterwards.
  void step_parallel(const Dataset& ds, const std::vector<std::size_t>& batch,
                     const std::vector<bool>& flips, std::size_t R, double& loss_out,
                     std::size_t& correct_out) {
    std::size_t n = std::min<std::size_t>(cfg_.threads, batch.size());
    if (clones_.size() < n) {
      while (clones_.size() < n) clones_.push_back(build_model<T>(model_.config, 0));
    }
    auto main_params = model_.named_parameters();
    for (std::size_t t = 0; t < n; ++t) {
      auto clone_params = clones_[t].named_parameters();
      for (std::size_t i = 0; i < main_params.size(); ++i) {
        clone_params[i].second.leaf_values() = main_params[i].second.values();
        clone_params[i].second.zero_grad();
      }
    }
    std::size_t chunk = (batch.size() + n - 1) / n;
    std::vector<double> partial_loss(n, 0.0);
    std::vector<std::size_t> partial_correct(n, 0);
    T inv_batch = T(1) / static_cast<T>(batch.size());
    auto worker = [&](std::size_t t) {
      std::size_t begin = t * chunk, end = std::min(batch.size(), (t + 1) * chunk);
      std::vector<Tensor<T>> losses;
      for (std::size_t i = begin; i < end; ++i) {
        auto x = dataset_sample<T>(ds, batch[i], R, flips[i]);
        auto logits = clones_[t].forward_single(x);
        if (argmax(logits) == ds.labels[batch[i]]) ++partial_correct[t];
        losses.push_back(softmax_cross_entropy(logits, ds.labels[batch[i]]));
      }
      Tensor<T> acc = losses.front();
      for (std::size_t i = 1; i < losses.size(); ++i) acc = add(acc, losses[i]);
      partial_loss[t] = static_cast<double>(acc.item());
      auto scaled = scalar_mul(acc, inv_batch);
      scaled.backward();
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t)
      if (t * chunk < batch.size()) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();

    loss_out = 0;
    correct_out = 0;
    for (std::size_t t = 0; t < n; ++t) {
      loss_out += partial_loss[t];
      correct_out += partial_correct[t];
    }
    loss_out /= double(batch.size());
    for (std::size_t t = 0; t < n; ++t) {
      if (t * chunk >= batch.size()) break;
      auto clone_params = clones_[t].named_parameters();
      for (std::size_t i = 0; i < main_params.size(); ++i) {
        if (!clone_params[i].second.has_grad()) continue;
        auto mp = main_params[i].second;
        mp.grad();  // ensure allocated
        auto& dst = mp.impl()->grad;
        const auto& src = clone_params[i].second.grad();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }

  Model<T>& model_;
  TrainConfig cfg_;
  Optimizer<T> optimizer_;
  Rng rng_;
  int epoch_ = 0;
  std::vector<Model<T>> clones_;
};

// One-call convenience wrapper.
template <typename T>
std::vector<EpochMetrics> train(Model<T>& model, const Dataset& train_set, const Dataset* eval_set,
                                const TrainConfig& cfg, std::ostream* progress = nullptr) {
  Trainer<T> trainer(model, cfg);
  return trainer.run(train_set, eval_set, progress);
}

}  // namespace hcnet
