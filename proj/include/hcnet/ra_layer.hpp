#pragma once

#include "hcnet/tensor.hpp"

namespace hcnet {

// Control knob for the superposition property check: with the identity
// activation (and no filter) the appended term is a linear map of the input
// and cannot generate new frequencies.
enum class RaActivation { gelu, identity };

// Refinement Approximation Layer: expands channels into candidate series
// terms, creates new frequencies through the nonlinearity, optionally
// filters them with a depthwise convolution, and contracts back with a
// separate coefficient set per channel; the result is added to the input.
template <typename T>
struct RaLayerParams {
  Tensor<T> expand_weight;    // [C, E*C]
  Tensor<T> expand_bias;      // [E*C]
  Tensor<T> filter_kernel;    // [E*C, 3, 3]
  Tensor<T> contract_weight;  // [E*C, C]
  Tensor<T> contract_bias;    // [C]
  bool use_filter = true;
  RaActivation activation = RaActivation::gelu;

  std::size_t channels() const { return expand_weight.dim(0); }
  std::size_t expanded() const { return expand_weight.dim(1); }

  static RaLayerParams init(std::size_t channels, std::size_t expansion, bool use_filter,
                            Rng& rng) {
    if (expansion == 0) throw ConfigError("expansion ratio must be positive");
    std::size_t ec = channels * expansion;
    RaLayerParams p;
    p.use_filter = use_filter;
    T s1 = T(1) / std::sqrt(static_cast<T>(channels));
    T s2 = T(1) / std::sqrt(static_cast<T>(ec));
    p.expand_weight = Tensor<T>::rand_uniform({channels, ec}, rng, -s1, s1, true);
    p.expand_bias = Tensor<T>::zeros({ec}, true);
    if (use_filter) {
      // near-pass-through filter: center 1 plus small noise, so the early
      // training trajectory matches the no-filter ablation
      std::vector<T> k(ec * 9);
      for (std::size_t c = 0; c < ec; ++c)
        for (std::size_t t = 0; t < 9; ++t)
          k[c * 9 + t] = (t == 4 ? T(1) : T(0)) + static_cast<T>(rng.normal()) * T(0.01);
      p.filter_kernel = Tensor<T>::from_vector({ec, 3, 3}, std::move(k), true);
    }
    p.contract_weight = Tensor<T>::rand_uniform({ec, channels}, rng, -s2, s2, true);
    p.contract_bias = Tensor<T>::zeros({channels}, true);
    return p;
  }
};

// The appended series term alone (no residual).
template <typename T>
Tensor<T> ra_term(const Tensor<T>& z, const RaLayerParams<T>& params) {
  if (z.ndim() != 3 || z.dim(0) != params.channels())
    throw DimensionError("ra_term: input " + shape_str(z.shape()) + " does not match " +
                         std::to_string(params.channels()) + " channels");
  Tensor<T> candidates = channel_linear(z, params.expand_weight, params.expand_bias);
  Tensor<T> basis =
      params.activation == RaActivation::gelu ? gelu(candidates) : candidates;
  if (params.use_filter)
    basis = depthwise_conv2d(basis, params.filter_kernel, PaddingMode::replicate);
  return channel_linear(basis, params.contract_weight, params.contract_bias);
}

template <typename T>
Tensor<T> ra_forward(const Tensor<T>& z, const RaLayerParams<T>& params) {
  return add(z, ra_term(z, params));
}

}  // namespace hcnet
