#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hcnet/configs.hpp"
#include "hcnet/tensor.hpp"

namespace hcnet {

// Per-parameter moment buffers, serialized into checkpoints.
template <typename T>
struct OptimizerState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> m;  // adamw first moment / sgd momentum buffer
  std::vector<std::vector<T>> v;  // adamw second moment
};

// First-order optimizers over leaf tensors. AdamW uses decoupled weight
// decay; sgd_momentum applies decay as a direct shrink term.
template <typename T>
class Optimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  static constexpr double kMomentum = 0.9;

  Optimizer(OptimizerKind kind, std::vector<Tensor<T>> params, double weight_decay)
      : kind_(kind), params_(std::move(params)), weight_decay_(weight_decay) {
    state_.m.resize(params_.size());
    if (kind_ == OptimizerKind::adamw) state_.v.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      state_.m[i].assign(params_[i].numel(), T(0));
      if (kind_ == OptimizerKind::adamw) state_.v[i].assign(params_[i].numel(), T(0));
    }
  }

  void step(double lr) {
    ++state_.step_count;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].leaf_values();
      const auto& g = params_[i].grad();
      auto& m = state_.m[i];
      if (kind_ == OptimizerKind::adamw) {
        auto& v = state_.v[i];
        double bc1 = 1.0 - std::pow(kBeta1, double(state_.step_count));
        double bc2 = 1.0 - std::pow(kBeta2, double(state_.step_count));
        for (std::size_t j = 0; j < p.size(); ++j) {
          m[j] = T(kBeta1 * m[j] + (1.0 - kBeta1) * g[j]);
          v[j] = T(kBeta2 * v[j] + (1.0 - kBeta2) * double(g[j]) * g[j]);
          double mhat = m[j] / bc1;
          double vhat = v[j] / bc2;
          p[j] = T(p[j] - lr * (mhat / (std::sqrt(vhat) + kEps) + weight_decay_ * p[j]));
        }
      } else {
        for (std::size_t j = 0; j < p.size(); ++j) {
          m[j] = T(kMomentum * m[j] + g[j]);
          p[j] = T(p[j] - lr * (m[j] + weight_decay_ * p[j]));
        }
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Optional projection onto the physical regime (stencil weights >= 0).
  void clamp_nonneg(Tensor<T>& t) {
    for (auto& x : t.leaf_values())
      if (x < T(0)) x = T(0);
  }

  OptimizerKind kind() const { return kind_; }
  OptimizerState<T>& state() { return state_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  OptimizerKind kind_;
  std::vector<Tensor<T>> params_;
  double weight_decay_;
  OptimizerState<T> state_;
};

// Learning-rate schedule over optimizer steps: linear warmup from zero, then
// cosine decay to zero (or a constant plateau).
inline double schedule_lr(ScheduleKind kind, double base_lr, std::size_t step,
                          std::size_t total_steps, std::size_t warmup_steps) {
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * double(step + 1) / double(warmup_steps);
  if (kind == ScheduleKind::constant) return base_lr;
  if (total_steps <= warmup_steps) return base_lr;
  double progress = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace hcnet
