#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hcnet/gradcheck.hpp"
#include "hcnet/hc_layer.hpp"
#include "hcnet/pde.hpp"

using namespace hcnet;
using T64 = Tensor<double>;

namespace {

T64 random_input(std::size_t c, std::size_t h, std::size_t w, Rng& rng, bool rg = false) {
  return T64::rand_uniform({c, h, w}, rng, -1.0, 1.0, rg);
}

}  // namespace

TEST_CASE("zero stencil weights make the layer an identity in every k mode") {
  Rng rng(1);
  auto z = random_input(3, 6, 6, rng);
  for (auto mode : {KMode::fixed, KMode::learnable, KMode::input_dependent}) {
    auto p = HcLayerParams<double>::init(3, mode, 0.7);
    p.stencil_w = T64::zeros({3, 4}, true);
    auto out = hc_forward(z, p, PaddingMode::replicate);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(out.values()[i] == z.values()[i]);
  }
}

TEST_CASE("constant fields are steady states under periodic boundary") {
  auto z = T64::full({2, 5, 5}, -1.75);
  auto p = HcLayerParams<double>::init(2, KMode::fixed, 0.3);
  p.stencil_w = T64::from_vector({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25}, true);
  auto out = hc_forward(z, p, PaddingMode::periodic);
  for (std::size_t i = 0; i < z.numel(); ++i)
    CHECK(out.values()[i] == doctest::Approx(-1.75).epsilon(1e-14));
}

TEST_CASE("single channel with fixed k reproduces the FDM oracle") {
  SUBCASE("unit impulse against the hand-checked step") {
    std::vector<double> impulse(25, 0.0);
    impulse[12] = 1.0;
    auto z = T64::from_vector({1, 5, 5}, impulse);
    auto p = HcLayerParams<double>::init(1, KMode::fixed, 0.1);
    p.stencil_w = T64::full({1, 4}, 1.0, true);
    auto out = hc_forward(z, p, PaddingMode::periodic);

    pde::TemperatureField f(5, 5);
    f.at(2, 2) = 1.0;
    pde::FdmConfig cfg;
    cfg.alpha_x1 = cfg.alpha_x2 = cfg.alpha_y1 = cfg.alpha_y2 = 1.0;
    cfg.dt = 0.1;
    cfg.boundary = PaddingMode::periodic;
    auto oracle = pde::fdm_step(f, cfg);
    for (std::size_t i = 0; i < 25; ++i)
      CHECK(std::abs(out.values()[i] - oracle.values[i]) <= 1e-12);
  }

  SUBCASE("twenty random nonnegative weight and k draws, all boundaries") {
    Rng rng(42);
    PaddingMode modes[3] = {PaddingMode::replicate, PaddingMode::periodic, PaddingMode::zero};
    for (int draw = 0; draw < 20; ++draw) {
      PaddingMode boundary = modes[draw % 3];
      double w1 = rng.uniform(0.0, 1.5), w2 = rng.uniform(0.0, 1.5);
      double w3 = rng.uniform(0.0, 1.5), w4 = rng.uniform(0.0, 1.5);
      double k = rng.uniform(0.01, 1.0);

      pde::TemperatureField f(7, 6);
      for (auto& v : f.values) v = rng.uniform(-2.0, 2.0);
      auto z = T64::from_vector({1, 7, 6}, f.values);

      auto p = HcLayerParams<double>::init(1, KMode::fixed, k);
      p.stencil_w = T64::from_vector({1, 4}, {w1, w2, w3, w4}, true);
      auto out = hc_forward(z, p, boundary);

      pde::FdmConfig cfg;
      cfg.alpha_x1 = w1;
      cfg.alpha_x2 = w2;
      cfg.alpha_y1 = w3;
      cfg.alpha_y2 = w4;
      cfg.dt = k;  // dx = dy = 1, so k = dt/dd^2
      cfg.boundary = boundary;
      cfg.allow_unstable = true;
      auto oracle = pde::fdm_step(f, cfg);
      for (std::size_t i = 0; i < f.values.size(); ++i)
        CHECK(std::abs(out.values()[i] - oracle.values[i]) <= 1e-12);
    }
  }
}

TEST_CASE("periodic boundary conserves the per-channel spatial sum") {
  Rng rng(7);

  SUBCASE("the increment sums to zero for arbitrary weights") {
    auto w = T64::rand_uniform({2, 4}, rng, -1.0, 1.0, true);
    for (int draw = 0; draw < 10; ++draw) {
      auto z = random_input(2, 8, 8, rng);
      auto h = stencil5(z, w, PaddingMode::periodic);
      for (std::size_t c = 0; c < 2; ++c) {
        double s = 0, scale = 0;
        for (std::size_t i = 0; i < 64; ++i) {
          s += h.values()[c * 64 + i];
          scale += std::abs(h.values()[c * 64 + i]);
        }
        CHECK(std::abs(s) <= 1e-13 * std::max(1.0, scale));
      }
    }
  }

  SUBCASE("sums drift at most 1e-12 over 100 stable steps") {
    auto p = HcLayerParams<double>::init(2, KMode::fixed, 0.9);
    p.stencil_w = T64::rand_uniform({2, 4}, rng, 0.0, 0.25, true);  // k*W <= 0.9
    auto z = random_input(2, 8, 8, rng);
    std::vector<double> sums0(2, 0.0);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 64; ++i) sums0[c] += z.values()[c * 64 + i];
    for (int step = 0; step < 100; ++step) z = hc_forward(z, p, PaddingMode::periodic);
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < 64; ++i) s += z.values()[c * 64 + i];
      CHECK(std::abs(s - sums0[c]) <= 1e-12 * std::max(1.0, std::abs(sums0[c])));
    }
  }
}

TEST_CASE("k gate") {
  auto p = HcLayerParams<double>::init(3, KMode::input_dependent);

  SUBCASE("zero input and zero-initialized gate give k = 0.5") {
    auto z = T64::zeros({3, 4, 4});
    auto k = hc_k_values(z, p);
    for (double v : k.values()) CHECK(v == 0.5);
  }

  SUBCASE("k stays strictly inside (0,1)") {
    Rng rng(11);
    p.k_linear_weight = T64::randn({3, 3}, rng, 0.5, true);
    p.k_linear_bias = T64::randn({3}, rng, 0.5, true);
    for (int i = 0; i < 10; ++i) {
      auto z = T64::rand_uniform({3, 4, 4}, rng, -5.0, 5.0);
      auto k = hc_k_values(z, p);
      for (double v : k.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
  }

  SUBCASE("off-diagonal weights mix channels") {
    std::vector<double> w(9, 0.0);
    w[0 * 3 + 1] = 1.0;  // channel 0 pool feeds k of channel 1
    p.k_linear_weight = T64::from_vector({3, 3}, w, true);
    auto z0 = T64::zeros({3, 4, 4});
    auto z1 = T64::zeros({3, 4, 4});
    auto v = z1.leaf_values();
    for (std::size_t i = 0; i < 16; ++i) v[i] = 1.0;  // perturb channel 0 only
    auto z1t = T64::from_vector({3, 4, 4}, v);
    auto k0 = hc_k_values(z0, p);
    auto k1 = hc_k_values(z1t, p);
    CHECK(k0.values()[1] != k1.values()[1]);
    CHECK(k0.values()[2] == k1.values()[2]);
  }

  SUBCASE("querying k outside input_dependent mode is a usage error") {
    auto fixed = HcLayerParams<double>::init(3, KMode::fixed, 0.1);
    CHECK_THROWS_AS(hc_k_values(T64::zeros({3, 4, 4}), fixed), UsageError);
  }
}

TEST_CASE("channel mismatch is rejected") {
  auto p = HcLayerParams<double>::init(3, KMode::fixed, 0.1);
  CHECK_THROWS_AS(hc_forward(T64::zeros({2, 4, 4}), p, PaddingMode::replicate), DimensionError);
}

TEST_CASE("with fixed k, channels diffuse independently") {
  Rng rng(13);
  auto p = HcLayerParams<double>::init(3, KMode::fixed, 0.2);
  p.stencil_w = T64::rand_uniform({3, 4}, rng, 0.0, 1.0, true);
  auto z = random_input(3, 5, 5, rng);
  auto base = hc_forward(z, p, PaddingMode::replicate);

  auto v = z.values();
  for (std::size_t i = 0; i < 25; ++i) v[1 * 25 + i] = 0.0;  // zero channel 1
  auto z2 = T64::from_vector({3, 5, 5}, v);
  auto out = hc_forward(z2, p, PaddingMode::replicate);
  for (std::size_t c : {std::size_t(0), std::size_t(2)})
    for (std::size_t i = 0; i < 25; ++i)
      CHECK(out.values()[c * 25 + i] == base.values()[c * 25 + i]);
}

TEST_CASE("gradients match finite differences in every k mode") {
  Rng rng(17);
  for (auto mode : {KMode::fixed, KMode::learnable, KMode::input_dependent}) {
    auto p = HcLayerParams<double>::init(3, mode, 0.4);
    // generic weights and gate so the loss is not degenerate
    p.stencil_w = T64::rand_uniform({3, 4}, rng, -0.5, 0.5, true);
    if (mode == KMode::input_dependent) {
      p.k_linear_weight = T64::randn({3, 3}, rng, 0.5, true);
      p.k_linear_bias = T64::randn({3}, rng, 0.2, true);
    }
    auto z = T64::rand_uniform({3, 6, 6}, rng, -1.0, 1.0, true);

    std::vector<T64> inputs = {z, p.stencil_w};
    if (mode == KMode::learnable) inputs.push_back(p.k_value);
    if (mode == KMode::input_dependent) {
      inputs.push_back(p.k_linear_weight);
      inputs.push_back(p.k_linear_bias);
    }
    auto rep = gradcheck::check_all(
        [&] {
          auto out = hc_forward(z, p, PaddingMode::replicate);
          return sum(hadamard(out, out));
        },
        inputs);
    CAPTURE(to_string(mode));
    CHECK(rep.pass(1e-5));
  }
}
