#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hcnet/gradcheck.hpp"
#include "hcnet/model.hpp"

using namespace hcnet;
using T64 = Tensor<double>;

TEST_CASE("hcnet-t construction hits the published parameter and MAC budgets") {
  auto cfg = ModelConfig::preset("hcnet-t");
  auto model = build_model<float>(cfg, 0);
  double params = static_cast<double>(model.count_params());
  CHECK(params >= 28e6 * 0.9);
  CHECK(params <= 28e6 * 1.1);

  double macs = static_cast<double>(model.count_macs(224));
  CHECK(macs >= 4.1e9 * 0.85);
  CHECK(macs <= 4.1e9 * 1.15);
}

TEST_CASE("head contributes exactly D4*classes + classes parameters") {
  auto cfg = ModelConfig::preset("hcnet-t");
  auto model = build_model<float>(cfg, 0);
  std::size_t head = 0;
  for (auto& [name, t] : model.named_parameters())
    if (name.rfind("head.", 0) == 0) head += t.numel();
  CHECK(head == 512u * 1000u + 1000u);
}

TEST_CASE("nano preset builds and produces logits on 32x32 input") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto model = build_model<double>(cfg, 7);
  auto zero = T64::zeros({1, 32, 32});
  auto logits = model.forward_single(zero);
  REQUIRE(logits.shape() == Shape{10});
  for (double v : logits.values()) CHECK(std::isfinite(v));
}

TEST_CASE("identical seeds build bit-identical models") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto m1 = build_model<double>(cfg, 99);
  auto m2 = build_model<double>(cfg, 99);
  auto p1 = m1.named_parameters();
  auto p2 = m2.named_parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].first == p2[i].first);
    REQUIRE(p1[i].second.numel() == p2[i].second.numel());
    for (std::size_t j = 0; j < p1[i].second.numel(); ++j)
      CHECK(p1[i].second.values()[j] == p2[i].second.values()[j]);
  }
  // a different seed must differ somewhere
  auto m3 = build_model<double>(cfg, 100);
  bool any_diff = false;
  auto p3 = m3.named_parameters();
  for (std::size_t i = 0; i < p1.size() && !any_diff; ++i)
    for (std::size_t j = 0; j < p1[i].second.numel() && !any_diff; ++j)
      any_diff = p1[i].second.values()[j] != p3[i].second.values()[j];
  CHECK(any_diff);
}

TEST_CASE("fully convolutional path accepts any multiple of 32") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  cfg.input_channels = 3;
  auto model = build_model<double>(cfg, 1);
  Rng rng(2);
  auto small = T64::rand_uniform({3, 32, 32}, rng, -1.0, 1.0);
  auto large = T64::rand_uniform({3, 64, 96}, rng, -1.0, 1.0);
  CHECK(model.forward_single(small).shape() == Shape{10});
  CHECK(model.forward_single(large).shape() == Shape{10});
  CHECK_THROWS_AS(model.forward_single(T64::zeros({3, 48, 48})), DimensionError);
  CHECK_THROWS_AS(model.forward_single(T64::zeros({1, 32, 32})), DimensionError);
}

TEST_CASE("duplicated batch samples produce identical logit rows") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto model = build_model<double>(cfg, 3);
  Rng rng(4);
  auto img = T64::rand_uniform({1, 32, 32}, rng, -1.0, 1.0);
  std::vector<double> batch;
  for (int rep = 0; rep < 3; ++rep)
    batch.insert(batch.end(), img.values().begin(), img.values().end());
  batch.insert(batch.end(), img.numel(), 0.25);  // one differing sample
  auto logits = model.forward_batch(T64::from_vector({4, 1, 32, 32}, batch));
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(logits.values()[0 * 10 + k] == logits.values()[1 * 10 + k]);
    CHECK(logits.values()[0 * 10 + k] == logits.values()[2 * 10 + k]);
  }
  bool differs = false;
  for (std::size_t k = 0; k < 10; ++k)
    differs = differs || logits.values()[3 * 10 + k] != logits.values()[0 * 10 + k];
  CHECK(differs);
}

TEST_CASE("stage shapes follow the divide-by-4-then-2 law") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto model = build_model<double>(cfg, 5);
  Rng rng(6);
  auto img = T64::rand_uniform({1, 64, 64}, rng, -1.0, 1.0);
  auto x = conv2d(img, model.stem.weight, model.stem.bias, 4);
  CHECK(x.shape() == Shape{16, 16, 16});
  x = conv2d(x, model.merges[0].weight, model.merges[0].bias, 2);
  CHECK(x.shape() == Shape{32, 8, 8});
  x = conv2d(x, model.merges[1].weight, model.merges[1].bias, 2);
  CHECK(x.shape() == Shape{64, 4, 4});
  x = conv2d(x, model.merges[2].weight, model.merges[2].bias, 2);
  CHECK(x.shape() == Shape{128, 2, 2});
}

TEST_CASE("zeroed diffusion and contraction reduce blocks to the identity") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto model = build_model<double>(cfg, 8);
  for (auto& stage : model.stages)
    for (auto& block : stage) {
      block.hc.stencil_w = T64::zeros(block.hc.stencil_w.shape(), true);
      block.ra.contract_weight = T64::zeros(block.ra.contract_weight.shape(), true);
      block.ra.contract_bias = T64::zeros(block.ra.contract_bias.shape(), true);
    }
  Rng rng(9);
  auto img = T64::rand_uniform({1, 32, 32}, rng, -1.0, 1.0);
  auto logits = model.forward_single(img);

  // reference: stem, merges, pool, head with the same tensors
  auto x = conv2d(img, model.stem.weight, model.stem.bias, 4);
  for (auto& m : model.merges) x = conv2d(x, m.weight, m.bias, 2);
  auto ref = linear(global_avg_pool(x), model.head_weight, model.head_bias);
  for (std::size_t k = 0; k < 10; ++k)
    CHECK(logits.values()[k] == doctest::Approx(ref.values()[k]).epsilon(1e-12));
}

TEST_CASE("expansion rebalancing narrows the no-filter parameter gap") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  int e = suggest_expansion_without_filter(cfg);
  CHECK(e >= cfg.expansion);
  ModelConfig without = cfg;
  without.use_filter = false;
  without.expansion = e;
  auto base = build_model<float>(cfg, 0);
  auto rebal = build_model<float>(without, 0);
  double target = static_cast<double>(base.count_params());
  double got = static_cast<double>(rebal.count_params());
  CHECK(std::abs(got - target) / target < 0.05);
}

TEST_CASE("end-to-end gradients on hcnet-nano match finite differences") {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto model = build_model<double>(cfg, 11);
  Rng rng(12);
  auto img0 = T64::rand_uniform({1, 32, 32}, rng, -1.0, 1.0);
  auto img1 = T64::rand_uniform({1, 32, 32}, rng, -1.0, 1.0);

  auto loss_fn = [&] {
    std::vector<T64> losses;
    losses.push_back(softmax_cross_entropy(model.forward_single(img0), 3));
    losses.push_back(softmax_cross_entropy(model.forward_single(img1), 7));
    return mean_scalars(losses);
  };
  auto rep = gradcheck::check_sampled(loss_fn, model.parameters(), 200, 1234);
  CAPTURE(rep.worst);
  CHECK(rep.pass(1e-4));
}
