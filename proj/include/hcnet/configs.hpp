#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hcnet/errors.hpp"
#include "hcnet/hc_layer.hpp"
#include "hcnet/padding.hpp"

namespace hcnet {

// Backbone construction settings. The named presets carry the published
// block/dim tables; "hcnet-nano" is an artifact-defined desk-scale config,
// not a published variant.
struct ModelConfig {
  std::array<int, 4> stage_blocks{5, 5, 14, 5};
  std::array<int, 4> stage_dims{64, 128, 320, 512};
  int num_classes = 1000;
  int input_channels = 3;
  int input_resolution = 224;
  KMode k_mode = KMode::input_dependent;
  double fixed_k = 0.5;  // fixed mode value, learnable mode start
  bool use_filter = true;
  int expansion = 4;
  bool norm_enabled = true;
  PaddingMode boundary = PaddingMode::replicate;

  void validate() const {
    for (int b : stage_blocks)
      if (b < 1) throw ConfigError("stage block counts must be >= 1");
    for (std::size_t i = 0; i < 4; ++i) {
      if (stage_dims[i] < 1) throw ConfigError("stage dims must be >= 1");
      if (i > 0 && stage_dims[i] < stage_dims[i - 1])
        throw ConfigError("stage dims must be non-decreasing");
    }
    if (num_classes < 2) throw ConfigError("need at least two classes");
    if (input_channels < 1) throw ConfigError("input channels must be >= 1");
    if (input_resolution < 32 || input_resolution % 32 != 0)
      throw ConfigError("input resolution must be a positive multiple of 32, got " +
                        std::to_string(input_resolution));
    if (expansion < 1) throw ConfigError("expansion ratio must be >= 1");
  }

  static ModelConfig preset(const std::string& name) {
    ModelConfig cfg;
    if (name == "hcnet-t") {
      cfg.stage_blocks = {5, 5, 14, 5};
      cfg.stage_dims = {64, 128, 320, 512};
    } else if (name == "hcnet-s") {
      cfg.stage_blocks = {6, 6, 18, 6};
      cfg.stage_dims = {64, 192, 384, 768};
    } else if (name == "hcnet-b") {
      cfg.stage_blocks = {10, 10, 28, 10};
      cfg.stage_dims = {96, 192, 384, 768};
    } else if (name == "hcnet-nano") {
      cfg.stage_blocks = {1, 1, 2, 1};
      cfg.stage_dims = {16, 32, 64, 128};
      cfg.num_classes = 10;
      cfg.input_channels = 1;
      cfg.input_resolution = 32;
    } else {
      throw ConfigError("unknown model preset '" + name +
                        "' (want hcnet-t|hcnet-s|hcnet-b|hcnet-nano)");
    }
    return cfg;
  }
};

enum class OptimizerKind { sgd_momentum, adamw };
enum class ScheduleKind { cosine, constant };

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd_momentum ? "sgd_momentum" : "adamw";
}
inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::cosine ? "cosine" : "constant";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + s + "' (want sgd_momentum|adamw)");
}
inline ScheduleKind schedule_from_string(const std::string& s) {
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "constant") return ScheduleKind::constant;
  throw ConfigError("unknown schedule '" + s + "' (want cosine|constant)");
}

// Desk-scale training recipe (not the paper's 300-epoch ImageNet schedule).
struct TrainConfig {
  int epochs = 5;
  int batch_size = 64;
  double base_lr = 1e-3;
  double weight_decay = 0.05;
  int warmup_epochs = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adamw;
  ScheduleKind schedule = ScheduleKind::cosine;
  bool clamp_stencil_nonneg = false;  // optional w >= 0 projection after each step
  bool augment_hflip = false;         // CIFAR-style horizontal flips
  int max_steps = 0;                  // 0 = full epochs; otherwise stop after N optimizer steps
  int threads = 1;                    // >1 enables the data-parallel batch path

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (base_lr <= 0) throw ConfigError("learning rate must be positive");
    if (weight_decay < 0) throw ConfigError("weight decay must be >= 0");
    if (warmup_epochs < 0 || warmup_epochs > epochs)
      throw ConfigError("warmup epochs must lie in [0, epochs]");
    if (max_steps < 0) throw ConfigError("max steps must be >= 0");
    if (threads < 1) throw ConfigError("thread count must be >= 1");
  }
};

}  // namespace hcnet
