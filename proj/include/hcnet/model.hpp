#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hcnet/configs.hpp"
#include "hcnet/hc_layer.hpp"
#include "hcnet/ra_layer.hpp"
#include "hcnet/tensor.hpp"

namespace hcnet {

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
  std::size_t stride = 1;
};

template <typename T>
struct ChannelNormParams {
  Tensor<T> gamma, beta;  // [C]
};

// Hc-Ra block: heat conduction then refinement approximation, each with its
// residual built in. The optional channel norms sit in front of either layer
// and stay off the residual stream, so zeroed layers leave the block as an
// exact identity.
template <typename T>
struct HcRaBlock {
  bool norm_enabled = false;
  ChannelNormParams<T> norm_hc, norm_ra;
  HcLayerParams<T> hc;
  RaLayerParams<T> ra;

  Tensor<T> forward(const Tensor<T>& z, PaddingMode boundary) const {
    Tensor<T> u = norm_enabled ? layer_norm_channels(z, norm_hc.gamma, norm_hc.beta) : z;
    Tensor<T> z1 = add(z, hc_term(u, hc, boundary));
    Tensor<T> v = norm_enabled ? layer_norm_channels(z1, norm_ra.gamma, norm_ra.beta) : z1;
    return add(z1, ra_term(v, ra));
  }
};

template <typename T>
class Model {
 public:
  ModelConfig config;
  Conv2dParams<T> stem;                       // 4x4 stride-4 patch embedding
  std::vector<Conv2dParams<T>> merges;        // 2x2 stride-2, ahead of stages 2..4
  std::vector<std::vector<HcRaBlock<T>>> stages;
  Tensor<T> head_weight;                      // [D4, num_classes]
  Tensor<T> head_bias;                        // [num_classes]

  // [C,H,W] -> [num_classes]; any H, W divisible by 32.
  Tensor<T> forward_single(const Tensor<T>& image) const {
    if (image.ndim() != 3 || image.dim(0) != static_cast<std::size_t>(config.input_channels))
      throw DimensionError("forward: image " + shape_str(image.shape()) + " does not match " +
                           std::to_string(config.input_channels) + " input channels");
    if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0 || image.dim(1) == 0 || image.dim(2) == 0)
      throw DimensionError("forward: spatial extents must be positive multiples of 32, got " +
                           shape_str(image.shape()));
    Tensor<T> x = conv2d(image, stem.weight, stem.bias, stem.stride);
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (s > 0) x = conv2d(x, merges[s - 1].weight, merges[s - 1].bias, merges[s - 1].stride);
      for (const auto& block : stages[s]) x = block.forward(x, config.boundary);
    }
    return linear(global_avg_pool(x), head_weight, head_bias);
  }

  // [B,C,H,W] -> [B,num_classes], inference only (no tape).
  Tensor<T> forward_batch(const Tensor<T>& batch) const {
    if (batch.ndim() != 4) throw DimensionError("forward_batch: want [B,C,H,W]");
    NoGradGuard no_grad;
    std::size_t B = batch.dim(0), K = static_cast<std::size_t>(config.num_classes);
    std::vector<T> out(B * K);
    for (std::size_t b = 0; b < B; ++b) {
      Tensor<T> logits = forward_single(batch.slice_outer(b));
      std::copy(logits.values().begin(), logits.values().end(), out.begin() + b * K);
    }
    return Tensor<T>::from_vector({B, K}, std::move(out));
  }

  // Learnable tensors in a stable order; this order defines the checkpoint
  // layout.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.emplace_back("stem.weight", stem.weight);
    out.emplace_back("stem.bias", stem.bias);
    for (std::size_t s = 0; s < stages.size(); ++s) {
      std::string sp = "stage" + std::to_string(s + 1) + ".";
      if (s > 0) {
        out.emplace_back(sp + "merge.weight", merges[s - 1].weight);
        out.emplace_back(sp + "merge.bias", merges[s - 1].bias);
      }
      for (std::size_t b = 0; b < stages[s].size(); ++b) {
        std::string bp = sp + "block" + std::to_string(b) + ".";
        auto& blk = stages[s][b];
        if (blk.norm_enabled) {
          out.emplace_back(bp + "norm_hc.gamma", blk.norm_hc.gamma);
          out.emplace_back(bp + "norm_hc.beta", blk.norm_hc.beta);
          out.emplace_back(bp + "norm_ra.gamma", blk.norm_ra.gamma);
          out.emplace_back(bp + "norm_ra.beta", blk.norm_ra.beta);
        }
        out.emplace_back(bp + "hc.stencil_w", blk.hc.stencil_w);
        if (blk.hc.k_mode == KMode::learnable) out.emplace_back(bp + "hc.k", blk.hc.k_value);
        if (blk.hc.k_mode == KMode::input_dependent) {
          out.emplace_back(bp + "hc.k_linear.weight", blk.hc.k_linear_weight);
          out.emplace_back(bp + "hc.k_linear.bias", blk.hc.k_linear_bias);
        }
        out.emplace_back(bp + "ra.expand.weight", blk.ra.expand_weight);
        out.emplace_back(bp + "ra.expand.bias", blk.ra.expand_bias);
        if (blk.ra.use_filter) out.emplace_back(bp + "ra.filter", blk.ra.filter_kernel);
        out.emplace_back(bp + "ra.contract.weight", blk.ra.contract_weight);
        out.emplace_back(bp + "ra.contract.bias", blk.ra.contract_bias);
      }
    }
    out.emplace_back("head.weight", head_weight);
    out.emplace_back("head.bias", head_bias);
    return out;
  }

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t count_params() {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  // Analytic multiply-accumulate count at the given input resolution;
  // normalization, pooling and activations are not counted.
  std::size_t count_macs(std::size_t resolution) const {
    if (resolution % 32 != 0) throw ConfigError("MAC count: resolution must be a multiple of 32");
    std::size_t macs = 0;
    std::size_t cin = static_cast<std::size_t>(config.input_channels);
    std::size_t r = resolution / 4;
    std::size_t d1 = static_cast<std::size_t>(config.stage_dims[0]);
    macs += d1 * r * r * cin * 16;  // stem
    std::size_t prev = d1;
    for (std::size_t s = 0; s < 4; ++s) {
      std::size_t dim = static_cast<std::size_t>(config.stage_dims[s]);
      if (s > 0) {
        r /= 2;
        macs += dim * r * r * prev * 4;  // patch merge
      }
      std::size_t hw = r * r;
      std::size_t ec = dim * static_cast<std::size_t>(config.expansion);
      std::size_t per_block = 5 * dim * hw       // stencil
                              + dim * hw;        // k * h scale
      if (config.k_mode == KMode::input_dependent) per_block += dim * dim;
      per_block += dim * ec * hw;                // expand
      if (config.use_filter) per_block += 9 * ec * hw;
      per_block += ec * dim * hw;                // contract
      macs += per_block * static_cast<std::size_t>(config.stage_blocks[s]);
      prev = dim;
    }
    macs += prev * static_cast<std::size_t>(config.num_classes);  // head
    return macs;
  }
};

namespace detail {

template <typename T>
Conv2dParams<T> init_conv(std::size_t cout, std::size_t cin, std::size_t k, std::size_t stride,
                          Rng& rng) {
  T bound = T(1) / std::sqrt(static_cast<T>(cin * k * k));
  Conv2dParams<T> p;
  p.weight = Tensor<T>::rand_uniform({cout, cin, k, k}, rng, -bound, bound, true);
  p.bias = Tensor<T>::zeros({cout}, true);
  p.stride = stride;
  return p;
}

}  // namespace detail

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model<T> model;
  model.config = config;
  std::size_t cin = static_cast<std::size_t>(config.input_channels);
  std::size_t d1 = static_cast<std::size_t>(config.stage_dims[0]);
  model.stem = detail::init_conv<T>(d1, cin, 4, 4, rng);
  std::size_t prev = d1;
  model.stages.resize(4);
  for (std::size_t s = 0; s < 4; ++s) {
    std::size_t dim = static_cast<std::size_t>(config.stage_dims[s]);
    if (s > 0) {
      model.merges.push_back(detail::init_conv<T>(dim, prev, 2, 2, rng));
      prev = dim;
    }
    for (int b = 0; b < config.stage_blocks[s]; ++b) {
      HcRaBlock<T> block;
      block.norm_enabled = config.norm_enabled;
      if (config.norm_enabled) {
        block.norm_hc = {Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, true)};
        block.norm_ra = {Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, true)};
      }
      block.hc = HcLayerParams<T>::init(dim, config.k_mode, static_cast<T>(config.fixed_k));
      block.ra = RaLayerParams<T>::init(dim, static_cast<std::size_t>(config.expansion),
                                        config.use_filter, rng);
      model.stages[s].push_back(std::move(block));
    }
  }
  std::size_t d4 = static_cast<std::size_t>(config.stage_dims[3]);
  std::size_t classes = static_cast<std::size_t>(config.num_classes);
  T bound = T(1) / std::sqrt(static_cast<T>(d4));
  model.head_weight = Tensor<T>::rand_uniform({d4, classes}, rng, -bound, bound, true);
  model.head_bias = Tensor<T>::zeros({classes}, true);
  return model;
}

// Expansion ratio that brings the no-filter parameter count closest to the
// filtered baseline (the Table-6 style comparison at equal budget). Reported
// by the CLI, never applied automatically.
inline int suggest_expansion_without_filter(const ModelConfig& config) {
  auto params_at = [&](bool filter, int expansion) {
    ModelConfig c = config;
    c.use_filter = filter;
    c.expansion = expansion;
    auto m = build_model<float>(c, 0);
    return static_cast<long long>(m.count_params());
  };
  long long target = params_at(true, config.expansion);
  int best = config.expansion;
  long long best_gap = std::llabs(params_at(false, config.expansion) - target);
  for (int e = config.expansion; e <= config.expansion * 2 + 2; ++e) {
    long long gap = std::llabs(params_at(false, e) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = e;
    }
  }
  return best;
}

}  // namespace hcnet
