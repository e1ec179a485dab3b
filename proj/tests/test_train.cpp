#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hcnet/checkpoint.hpp"
#include "hcnet/dataset.hpp"
#include "hcnet/train.hpp"
#include "idx_fixture.hpp"

using namespace hcnet;
namespace fs = std::filesystem;

namespace {

const std::string kDir = "train_test_data";

struct FixtureGuard {
  FixtureGuard() {
    fixture::write_synthetic_split(kDir, "train", 40, 7);  // 400 samples
    fixture::write_synthetic_split(kDir, "t10k", 30, 8);   // 300 samples
  }
  ~FixtureGuard() { fs::remove_all(kDir); }
};

ModelConfig nano() { return ModelConfig::preset("hcnet-nano"); }

TrainConfig quick_cfg() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.base_lr = 2e-3;
  cfg.weight_decay = 0.05;
  cfg.warmup_epochs = 1;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("adamw step matches the hand-computed update") {
  auto x = Tensor<double>::scalar(0.0, true);
  Optimizer<double> opt(OptimizerKind::adamw, {x}, 0.01);
  // quadratic (x-3)^2: gradient at x=0 is -6
  x.impl()->ensure_grad();
  x.impl()->grad[0] = -6.0;
  opt.step(0.1);
  // m=-0.6, v=0.036, mhat=-6, vhat=36, update = lr*(mhat/(sqrt(vhat)+eps) + wd*x)
  double expected = 0.0 - 0.1 * (-6.0 / (6.0 + 1e-8) + 0.01 * 0.0);
  CHECK(std::abs(x.values()[0] - expected) <= 1e-12);

  // second step from the same gradient
  x.impl()->grad[0] = -6.0;
  opt.step(0.1);
  double m2 = 0.9 * -0.6 + 0.1 * -6.0;
  double v2 = 0.999 * 0.036 + 0.001 * 36.0;
  double mhat = m2 / (1 - std::pow(0.9, 2));
  double vhat = v2 / (1 - std::pow(0.999, 2));
  expected = expected - 0.1 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.01 * expected);
  CHECK(std::abs(x.values()[0] - expected) <= 1e-12);
}

TEST_CASE("sgd momentum step matches the hand-computed update") {
  auto x = Tensor<double>::scalar(1.0, true);
  Optimizer<double> opt(OptimizerKind::sgd_momentum, {x}, 0.0);
  x.impl()->ensure_grad();
  x.impl()->grad[0] = 2.0 * (1.0 - 3.0);  // -4
  opt.step(0.1);
  CHECK(std::abs(x.values()[0] - (1.0 - 0.1 * -4.0)) <= 1e-12);
  x.impl()->grad[0] = -2.0;
  opt.step(0.1);
  // buf = 0.9*(-4) + (-2) = -5.6
  CHECK(std::abs(x.values()[0] - (1.4 - 0.1 * -5.6)) <= 1e-12);
}

TEST_CASE("cosine schedule endpoints and linear warmup") {
  double base = 1e-3;
  std::size_t total = 1000, warmup = 100;
  // warmup rises linearly from near zero to base
  CHECK(schedule_lr(ScheduleKind::cosine, base, 0, total, warmup) ==
        doctest::Approx(base / 100).epsilon(1e-12));
  CHECK(schedule_lr(ScheduleKind::cosine, base, 49, total, warmup) ==
        doctest::Approx(base * 0.5).epsilon(1e-12));
  CHECK(schedule_lr(ScheduleKind::cosine, base, 100, total, warmup) ==
        doctest::Approx(base).epsilon(1e-12));
  // and decays to ~0 at the end
  CHECK(schedule_lr(ScheduleKind::cosine, base, 999, total, warmup) < 0.01 * base);
  CHECK(schedule_lr(ScheduleKind::constant, base, 500, total, warmup) == base);
}

TEST_CASE("idx loader round trip and error paths") {
  FixtureGuard guard;

  auto ds = load_mnist(kDir, Split::train);
  CHECK(ds.count == 400);
  CHECK(ds.channels == 1);
  CHECK(ds.height == 28);
  CHECK(ds.width == 28);
  CHECK(ds.labels.size() == 400);
  // normalized to zero mean, unit variance
  double mean = 0;
  for (float v : ds.images) mean += v;
  mean /= ds.images.size();
  CHECK(std::abs(mean) < 1e-4);

  SUBCASE("test split reuses training statistics") {
    auto test = load_mnist(kDir, Split::test, &ds.stats);
    CHECK(test.count == 300);
    CHECK(test.stats.mean[0] == ds.stats.mean[0]);
  }

  SUBCASE("bad magic names the offset") {
    std::string bad = kDir + "/bad-images-idx3-ubyte";
    std::ofstream out(bad, std::ios::binary);
    fixture::put_be32(out, 0xdeadbeef);
    fixture::put_be32(out, 1);
    fixture::put_be32(out, 2);
    fixture::put_be32(out, 2);
    out.put(0);
    out.close();
    std::size_t c, r, w;
    try {
      read_idx_images(bad, c, r, w);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      std::string msg = e.what();
      CHECK(msg.find("magic") != std::string::npos);
      CHECK(msg.find("offset 0") != std::string::npos);
    }
  }

  SUBCASE("truncated file is a parse error, not a crash") {
    std::string path = kDir + "/train-images-idx3-ubyte";
    auto size = fs::file_size(path);
    fs::resize_file(path, size - 1);
    std::size_t c, r, w;
    CHECK_THROWS_AS(read_idx_images(path, c, r, w), ParseError);
  }

  SUBCASE("out-of-range label names the byte offset") {
    std::string path = kDir + "/train-labels-idx1-ubyte";
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8 + 5);
    f.put(11);  // invalid class
    f.close();
    try {
      load_mnist(kDir, Split::train);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      std::string msg = e.what();
      CHECK(msg.find("label 11") != std::string::npos);
      CHECK(msg.find(std::to_string(8 + 5)) != std::string::npos);
    }
  }
}

TEST_CASE("cifar-10 loader parses records and rejects truncation") {
  fs::create_directories(kDir);
  for (int b = 1; b <= 5; ++b)
    fixture::write_cifar_batch(kDir + "/data_batch_" + std::to_string(b) + ".bin", 20, 100 + b);
  fixture::write_cifar_batch(kDir + "/test_batch.bin", 10, 99);

  auto ds = load_cifar10(kDir, Split::train);
  CHECK(ds.count == 100);
  CHECK(ds.channels == 3);
  CHECK(ds.height == 32);
  CHECK(ds.labels[0] < 10);

  auto test = load_cifar10(kDir, Split::test, &ds.stats);
  CHECK(test.count == 10);

  fs::resize_file(kDir + "/test_batch.bin", 3073 * 10 - 7);
  CHECK_THROWS_AS(load_cifar10(kDir, Split::test), ParseError);
  fs::remove_all(kDir);
}

TEST_CASE("zero epochs leave the model untouched and the log empty") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);
  auto model = build_model<float>(nano(), 5);
  auto before = model.named_parameters();
  std::vector<std::vector<float>> snapshot;
  for (auto& [n, t] : before) snapshot.push_back(t.values());

  auto cfg = quick_cfg();
  cfg.epochs = 0;
  cfg.warmup_epochs = 0;
  auto log = train(model, train_set, nullptr, cfg);
  CHECK(log.empty());
  auto after = model.named_parameters();
  for (std::size_t i = 0; i < after.size(); ++i)
    CHECK(after[i].second.values() == snapshot[i]);
}

TEST_CASE("training reduces the loss and is seed-deterministic") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);
  auto test_set = load_mnist(kDir, Split::test, &train_set.stats);

  auto run = [&] {
    auto model = build_model<float>(nano(), 5);
    auto log = train(model, train_set, &test_set, quick_cfg());
    return metrics_csv(log);
  };
  std::string csv1 = run();
  std::string csv2 = run();
  CHECK(csv1 == csv2);

  // parse the loss column back out of the log
  auto model = build_model<float>(nano(), 5);
  auto log = train(model, train_set, &test_set, quick_cfg());
  REQUIRE(log.size() == 2);
  CHECK(log.back().train_loss < log.front().train_loss);
  CHECK(log.back().eval_acc > 0.5);
}

TEST_CASE("evaluate is idempotent and near chance for an untrained model") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);
  auto test_set = load_mnist(kDir, Split::test, &train_set.stats);
  auto model = build_model<float>(nano(), 21);
  auto r1 = evaluate(model, test_set);
  auto r2 = evaluate(model, test_set);
  CHECK(r1.accuracy == r2.accuracy);
  CHECK(r1.mean_loss == r2.mean_loss);
  CHECK(r1.accuracy >= 0.0);
  CHECK(r1.accuracy <= 0.35);  // chance is 0.1 on balanced labels
}

TEST_CASE("checkpoint round trip is byte-identical and resumes identically") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);

  auto cfg = quick_cfg();
  cfg.epochs = 2;

  // reference: two uninterrupted epochs
  auto ref_model = build_model<float>(nano(), 5);
  Trainer<float> ref_trainer(ref_model, cfg);
  auto ref_log = ref_trainer.run(train_set, nullptr);

  // interrupted: one epoch, checkpoint, reload, second epoch
  auto cfg1 = cfg;
  cfg1.epochs = 1;
  auto model = build_model<float>(nano(), 5);
  Trainer<float> t1(model, cfg1);
  auto log1 = t1.run(train_set, nullptr);
  checkpoint::save<float>("ckpt_test.bin", model, &t1.optimizer(), t1.rng().serialize(), 1);

  auto loaded = checkpoint::load<float>("ckpt_test.bin");
  CHECK(loaded.epoch == 1);
  Trainer<float> t2(loaded.model, cfg);
  t2.restore(loaded);
  auto log2 = t2.run(train_set, nullptr);

  REQUIRE(log2.size() == 1);
  CHECK(log2[0].train_loss == ref_log[1].train_loss);
  CHECK(log2[0].train_acc == ref_log[1].train_acc);

  // loading and re-saving reproduces the file byte for byte
  checkpoint::save<float>("ckpt_test2.bin", loaded.model, nullptr, loaded.rng_state, loaded.epoch);
  auto reloaded = checkpoint::load<float>("ckpt_test2.bin");
  auto p1 = loaded.model.named_parameters();
  auto p2 = reloaded.model.named_parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].second.values() == p2[i].second.values());

  checkpoint::save<float>("ckpt_test3.bin", reloaded.model, nullptr, reloaded.rng_state, reloaded.epoch);
  std::ifstream a("ckpt_test2.bin", std::ios::binary), b("ckpt_test3.bin", std::ios::binary);
  std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);

  std::remove("ckpt_test.bin");
  std::remove("ckpt_test2.bin");
  std::remove("ckpt_test3.bin");
}

TEST_CASE("checkpoint accuracy survives the round trip") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);
  auto test_set = load_mnist(kDir, Split::test, &train_set.stats);
  auto model = build_model<float>(nano(), 5);
  auto cfg = quick_cfg();
  cfg.epochs = 1;
  train(model, train_set, nullptr, cfg);
  double before = evaluate(model, test_set).accuracy;
  checkpoint::save<float>("ckpt_acc.bin", model, nullptr, "", 1);
  auto loaded = checkpoint::load<float>("ckpt_acc.bin");
  CHECK(evaluate(loaded.model, test_set).accuracy == before);
  std::remove("ckpt_acc.bin");
}

TEST_CASE("horizontal flip mirrors columns and cifar training runs with it") {
  fs::create_directories(kDir);
  for (int b = 1; b <= 5; ++b)
    fixture::write_cifar_batch(kDir + "/data_batch_" + std::to_string(b) + ".bin", 16, 300 + b);
  fixture::write_cifar_batch(kDir + "/test_batch.bin", 8, 99);
  auto ds = load_cifar10(kDir, Split::train);

  auto plain = dataset_sample<float>(ds, 0, 32, false);
  auto flipped = dataset_sample<float>(ds, 0, 32, true);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        CHECK(flipped.values()[(c * 32 + y) * 32 + x] ==
              plain.values()[(c * 32 + y) * 32 + (31 - x)]);

  auto cfg = ModelConfig::preset("hcnet-nano");
  cfg.input_channels = 3;
  auto model = build_model<float>(cfg, 3);
  TrainConfig tc = quick_cfg();
  tc.epochs = 1;
  tc.batch_size = 16;
  tc.warmup_epochs = 0;
  tc.max_steps = 2;
  tc.augment_hflip = true;
  auto log = train(model, ds, nullptr, tc);
  REQUIRE(log.size() == 1);
  CHECK(std::isfinite(log[0].train_loss));
  fs::remove_all(kDir);
}

TEST_CASE("corrupt or missing checkpoints are clean errors") {
  std::ofstream("bad.ckpt", std::ios::binary) << "NOTACKPT";
  CHECK_THROWS_AS(checkpoint::load<float>("bad.ckpt"), ParseError);
  std::remove("bad.ckpt");
  CHECK_THROWS_AS(checkpoint::load<float>("missing.ckpt"), IoError);

  // truncated mid-parameters
  FixtureGuard guard;
  auto model = build_model<float>(nano(), 5);
  checkpoint::save<float>("trunc.ckpt", model, nullptr, "", 0);
  fs::resize_file("trunc.ckpt", fs::file_size("trunc.ckpt") / 2);
  CHECK_THROWS_AS(checkpoint::load<float>("trunc.ckpt"), ParseError);
  std::remove("trunc.ckpt");
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);
  auto model = build_model<float>(nano(), 5);
  model.head_weight.leaf_values()[0] = std::nanf("");
  auto cfg = quick_cfg();
  try {
    train(model, train_set, nullptr, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    std::string msg = e.what();
    CHECK(msg.find("epoch 0") != std::string::npos);
    CHECK(msg.find("batch 0") != std::string::npos);
    CHECK(msg.find("lr") != std::string::npos);
  }
}

TEST_CASE("max_steps caps the run and the parallel path agrees with serial") {
  FixtureGuard guard;
  auto train_set = load_mnist(kDir, Split::train);

  auto cfg = quick_cfg();
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  cfg.max_steps = 3;

  auto serial_model = build_model<float>(nano(), 5);
  auto serial_log = train(serial_model, train_set, nullptr, cfg);
  REQUIRE(serial_log.size() == 1);
  CHECK(std::isfinite(serial_log[0].train_loss));

  auto par_cfg = cfg;
  par_cfg.threads = 2;
  auto par_model = build_model<float>(nano(), 5);
  auto par_log = train(par_model, train_set, nullptr, par_cfg);
  REQUIRE(par_log.size() == 1);
  // same math, different accumulation order: close but not bitwise
  CHECK(par_log[0].train_loss ==
        doctest::Approx(serial_log[0].train_loss).epsilon(1e-3));
}
