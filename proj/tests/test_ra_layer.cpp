#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hcnet/gradcheck.hpp"
#include "hcnet/pde.hpp"
#include "hcnet/ra_layer.hpp"

using namespace hcnet;
using T64 = Tensor<double>;

TEST_CASE("zero contract map reduces the layer to the residual") {
  Rng rng(3);
  auto p = RaLayerParams<double>::init(2, 4, true, rng);
  p.contract_weight = T64::zeros({8, 2}, true);
  p.contract_bias = T64::zeros({2}, true);
  auto z = T64::rand_uniform({2, 5, 5}, rng, -1.0, 1.0);
  auto out = ra_forward(z, p);
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(out.values()[i] == z.values()[i]);
}

TEST_CASE("zero expand map with zero biases is also the identity") {
  Rng rng(5);
  auto p = RaLayerParams<double>::init(2, 4, true, rng);
  p.expand_weight = T64::zeros({2, 8}, true);
  p.expand_bias = T64::zeros({8}, true);
  auto z = T64::rand_uniform({2, 4, 4}, rng, -1.0, 1.0);
  // gelu(0) = 0, the filter of 0 is 0, contract of 0 keeps only its zero bias
  auto out = ra_forward(z, p);
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(out.values()[i] == z.values()[i]);
}

TEST_CASE("residual identity: forward equals input plus term, bitwise") {
  Rng rng(7);
  for (bool filter : {true, false}) {
    auto p = RaLayerParams<double>::init(3, 4, filter, rng);
    auto z = T64::rand_uniform({3, 6, 6}, rng, -1.0, 1.0);
    auto fwd = ra_forward(z, p);
    auto term = ra_term(z, p);
    auto recomposed = add(z, term);
    for (std::size_t i = 0; i < z.numel(); ++i)
      CHECK(fwd.values()[i] == recomposed.values()[i]);
  }
}

TEST_CASE("zero input with zero biases appends a zero term") {
  Rng rng(9);
  auto p = RaLayerParams<double>::init(2, 4, true, rng);
  auto z = T64::zeros({2, 4, 4});
  auto term = ra_term(z, p);
  for (double v : term.values()) CHECK(v == 0.0);
}

TEST_CASE("channel mismatch is rejected") {
  Rng rng(11);
  auto p = RaLayerParams<double>::init(3, 4, true, rng);
  CHECK_THROWS_AS(ra_forward(T64::zeros({2, 4, 4}), p), DimensionError);
}

TEST_CASE("gradients across all parameters and the input") {
  Rng rng(13);
  for (bool filter : {true, false}) {
    auto p = RaLayerParams<double>::init(2, 4, filter, rng);
    auto z = T64::rand_uniform({2, 4, 4}, rng, -1.0, 1.0, true);
    std::vector<T64> inputs = {z, p.expand_weight, p.expand_bias, p.contract_weight,
                               p.contract_bias};
    if (filter) inputs.push_back(p.filter_kernel);
    auto rep = gradcheck::check_all(
        [&] {
          auto out = ra_forward(z, p);
          return sum(hadamard(out, out));
        },
        inputs);
    CAPTURE(filter);
    CHECK(rep.pass(1e-5));
  }
}

TEST_CASE("the appended term carries new frequencies for a single-mode input") {
  // one channel, deterministic maps: expand to amplitude 0.9 candidates,
  // contract sums them; spectrum of the term shows the doubled-frequency
  // family regardless of the filter flag
  const std::size_t R = 32;
  std::vector<double> field(R * R);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j)
      field[i * R + j] = std::sin(2.0 * M_PI * i / R) * std::sin(2.0 * M_PI * j / R);
  auto z = T64::from_vector({1, R, R}, field);
  double input_peak = pde::field_spectrum(field, R).energy(1, 1);

  Rng rng(15);
  for (bool filter : {false, true}) {
    auto p = RaLayerParams<double>::init(1, 2, filter, rng);
    p.expand_weight = T64::from_vector({1, 2}, {0.9, 0.7}, true);
    p.expand_bias = T64::zeros({2}, true);
    p.contract_weight = T64::from_vector({2, 1}, {1.0, 1.0}, true);
    p.contract_bias = T64::zeros({1}, true);
    if (filter) {
      // exact pass-through filter keeps the spectral bookkeeping simple
      std::vector<double> k(2 * 9, 0.0);
      k[4] = 1.0;
      k[13] = 1.0;
      p.filter_kernel = T64::from_vector({2, 3, 3}, k, true);
    }
    auto term = ra_term(z, p);
    auto spec = pde::field_spectrum(term.values(), R);
    double doubled = spec.energy(2, 0) + spec.energy(0, 2) + spec.energy(2, 2);
    CAPTURE(filter);
    CHECK(doubled >= 1e-3 * input_peak);
  }
}

TEST_CASE("identity activation without filter makes the term linear") {
  Rng rng(17);
  auto p = RaLayerParams<double>::init(2, 4, false, rng);
  p.activation = RaActivation::identity;
  p.expand_bias = T64::zeros({8}, true);
  p.contract_bias = T64::zeros({2}, true);
  auto u = T64::rand_uniform({2, 4, 4}, rng, -1.0, 1.0);
  auto v = T64::rand_uniform({2, 4, 4}, rng, -1.0, 1.0);
  double a = 1.7, b = -0.6;
  std::vector<double> mix(u.numel());
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix[i] = a * u.values()[i] + b * v.values()[i];
  auto lhs = ra_term(T64::from_vector({2, 4, 4}, mix), p);
  auto tu = ra_term(u, p);
  auto tv = ra_term(v, p);
  for (std::size_t i = 0; i < mix.size(); ++i)
    CHECK(std::abs(lhs.values()[i] - (a * tu.values()[i] + b * tv.values()[i])) <= 1e-12);

  // with gelu back in place superposition must fail
  p.activation = RaActivation::gelu;
  auto glhs = ra_term(T64::from_vector({2, 4, 4}, mix), p);
  auto gtu = ra_term(u, p);
  auto gtv = ra_term(v, p);
  double worst = 0;
  for (std::size_t i = 0; i < mix.size(); ++i)
    worst = std::max(worst, std::abs(glhs.values()[i] - (a * gtu.values()[i] + b * gtv.values()[i])));
  CHECK(worst > 1e-6);
}
