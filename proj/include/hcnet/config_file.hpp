#pragma once

#include <map>
#include <string>

#include "hcnet/configs.hpp"

namespace hcnet {

// Flat key=value documents; '#' starts a comment, blank lines are skipped.
std::map<std::string, std::string> read_kv_file(const std::string& path);

// Apply recognized keys onto the configs, erasing them from the map; callers
// treat leftovers as unknown-key errors. A "model" key selects a preset
// before any field overrides.
void apply_model_keys(ModelConfig& cfg, std::map<std::string, std::string>& kv);
void apply_train_keys(TrainConfig& cfg, std::map<std::string, std::string>& kv);

std::string model_config_to_kv(const ModelConfig& cfg);

}  // namespace hcnet
