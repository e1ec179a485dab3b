#pragma once

#include <string>

#include "hcnet/tensor.hpp"

namespace hcnet {

// How the step ratio k = dt/dd^2 is obtained per layer.
enum class KMode { fixed, learnable, input_dependent };

inline std::string to_string(KMode mode) {
  switch (mode) {
    case KMode::fixed: return "fixed";
    case KMode::learnable: return "learnable";
    case KMode::input_dependent: return "input_dependent";
  }
  return "?";
}

inline KMode k_mode_from_string(const std::string& s) {
  if (s == "fixed") return KMode::fixed;
  if (s == "learnable") return KMode::learnable;
  if (s == "input_dependent") return KMode::input_dependent;
  throw ConfigError("unknown k mode '" + s + "' (want fixed|learnable|input_dependent)");
}

// Heat Conduction Layer: a learnable five-point diffusion update
//   z <- z + k * (N(z) - W z)
// with per-channel stencil weights playing the role of one-sided thermal
// diffusivities. In input_dependent mode k comes from a sigmoid-gated linear
// map of the pooled features (per channel); otherwise it is a fixed constant
// or a learnable per-channel parameter used as-is.
template <typename T>
struct HcLayerParams {
  Tensor<T> stencil_w;        // [C,4]: +x, -x, +y, -y neighbour weights
  KMode k_mode = KMode::input_dependent;
  Tensor<T> k_value;          // [C], fixed or learnable modes
  Tensor<T> k_linear_weight;  // [C,C], input_dependent mode
  Tensor<T> k_linear_bias;    // [C]

  std::size_t channels() const { return stencil_w.dim(0); }

  // Mild isotropic start: w = 0.25 each (so W = 1), k gate at 0.5.
  static HcLayerParams init(std::size_t channels, KMode mode, T fixed_k = T(0.5)) {
    HcLayerParams p;
    p.k_mode = mode;
    p.stencil_w = Tensor<T>::full({channels, 4}, T(0.25), true);
    switch (mode) {
      case KMode::fixed:
        p.k_value = Tensor<T>::full({channels}, fixed_k, false);
        break;
      case KMode::learnable:
        p.k_value = Tensor<T>::full({channels}, fixed_k, true);
        break;
      case KMode::input_dependent:
        p.k_linear_weight = Tensor<T>::zeros({channels, channels}, true);
        p.k_linear_bias = Tensor<T>::zeros({channels}, true);
        break;
    }
    return p;
  }
};

// The per-channel step ratios of the input-dependent gate:
// sigma(GAP(z) * W + b). Exposed separately for inspection and ablation logs.
template <typename T>
Tensor<T> hc_k_values(const Tensor<T>& z, const HcLayerParams<T>& params) {
  if (params.k_mode != KMode::input_dependent)
    throw UsageError("hc_k_values: layer is in " + to_string(params.k_mode) +
                     " mode, k is not input-dependent");
  if (z.ndim() != 3 || z.dim(0) != params.channels())
    throw DimensionError("hc_k_values: input " + shape_str(z.shape()) + " does not match " +
                         std::to_string(params.channels()) + " channels");
  return sigmoid(linear(global_avg_pool(z), params.k_linear_weight, params.k_linear_bias));
}

// The diffusion increment k * (N(z) - W z) alone; hc_forward adds it to z.
template <typename T>
Tensor<T> hc_term(const Tensor<T>& z, const HcLayerParams<T>& params, PaddingMode boundary) {
  if (z.ndim() != 3 || z.dim(0) != params.channels())
    throw DimensionError("hc layer: input " + shape_str(z.shape()) + " does not match " +
                         std::to_string(params.channels()) + " channels");
  Tensor<T> h = stencil5(z, params.stencil_w, boundary);
  Tensor<T> k = params.k_mode == KMode::input_dependent ? hc_k_values(z, params) : params.k_value;
  return scale_channels(h, k);
}

template <typename T>
Tensor<T> hc_forward(const Tensor<T>& z, const HcLayerParams<T>& params, PaddingMode boundary) {
  return add(z, hc_term(z, params, boundary));
}

}  // namespace hcnet
