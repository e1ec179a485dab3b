#include "hcnet/config_file.hpp"

#include <fstream>
#include <sstream>

namespace hcnet {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a bool (true|false|1|0)");
}

std::array<int, 4> to_int4(const std::string& key, const std::string& v) {
  std::array<int, 4> out{};
  std::stringstream ss(v);
  std::string cell;
  std::size_t i = 0;
  while (std::getline(ss, cell, ',')) {
    if (i >= 4) throw ConfigError("key '" + key + "': want exactly four comma-separated values");
    out[i++] = to_int(key, trim(cell));
  }
  if (i != 4) throw ConfigError("key '" + key + "': want exactly four comma-separated values");
  return out;
}

template <typename F>
void take(std::map<std::string, std::string>& kv, const std::string& key, F&& apply) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  apply(it->second);
  kv.erase(it);
}

}  // namespace

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                        ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config file '" + path + "' line " + std::to_string(lineno) +
                                       ": empty key");
    kv[key] = value;
  }
  return kv;
}

void apply_model_keys(ModelConfig& cfg, std::map<std::string, std::string>& kv) {
  take(kv, "model", [&](const std::string& v) { cfg = ModelConfig::preset(v); });
  take(kv, "blocks", [&](const std::string& v) { cfg.stage_blocks = to_int4("blocks", v); });
  take(kv, "dims", [&](const std::string& v) { cfg.stage_dims = to_int4("dims", v); });
  take(kv, "num_classes", [&](const std::string& v) { cfg.num_classes = to_int("num_classes", v); });
  take(kv, "input_channels",
       [&](const std::string& v) { cfg.input_channels = to_int("input_channels", v); });
  take(kv, "input_resolution",
       [&](const std::string& v) { cfg.input_resolution = to_int("input_resolution", v); });
  take(kv, "k_mode", [&](const std::string& v) { cfg.k_mode = k_mode_from_string(v); });
  take(kv, "fixed_k", [&](const std::string& v) { cfg.fixed_k = to_double("fixed_k", v); });
  take(kv, "use_filter", [&](const std::string& v) { cfg.use_filter = to_bool("use_filter", v); });
  take(kv, "expansion", [&](const std::string& v) { cfg.expansion = to_int("expansion", v); });
  take(kv, "norm_enabled",
       [&](const std::string& v) { cfg.norm_enabled = to_bool("norm_enabled", v); });
  take(kv, "boundary", [&](const std::string& v) { cfg.boundary = padding_mode_from_string(v); });
}

void apply_train_keys(TrainConfig& cfg, std::map<std::string, std::string>& kv) {
  take(kv, "epochs", [&](const std::string& v) { cfg.epochs = to_int("epochs", v); });
  take(kv, "batch_size", [&](const std::string& v) { cfg.batch_size = to_int("batch_size", v); });
  take(kv, "base_lr", [&](const std::string& v) { cfg.base_lr = to_double("base_lr", v); });
  take(kv, "weight_decay",
       [&](const std::string& v) { cfg.weight_decay = to_double("weight_decay", v); });
  take(kv, "warmup_epochs",
       [&](const std::string& v) { cfg.warmup_epochs = to_int("warmup_epochs", v); });
  take(kv, "seed", [&](const std::string& v) {
    cfg.seed = static_cast<std::uint64_t>(std::stoull(v));
  });
  take(kv, "optimizer", [&](const std::string& v) { cfg.optimizer = optimizer_from_string(v); });
  take(kv, "schedule", [&](const std::string& v) { cfg.schedule = schedule_from_string(v); });
  take(kv, "clamp_stencil_nonneg",
       [&](const std::string& v) { cfg.clamp_stencil_nonneg = to_bool("clamp_stencil_nonneg", v); });
  take(kv, "augment_hflip",
       [&](const std::string& v) { cfg.augment_hflip = to_bool("augment_hflip", v); });
  take(kv, "max_steps", [&](const std::string& v) { cfg.max_steps = to_int("max_steps", v); });
  take(kv, "threads", [&](const std::string& v) { cfg.threads = to_int("threads", v); });
}

std::string model_config_to_kv(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "blocks=" << cfg.stage_blocks[0] << ',' << cfg.stage_blocks[1] << ','
     << cfg.stage_blocks[2] << ',' << cfg.stage_blocks[3] << '\n';
  os << "dims=" << cfg.stage_dims[0] << ',' << cfg.stage_dims[1] << ',' << cfg.stage_dims[2] << ','
     << cfg.stage_dims[3] << '\n';
  os << "num_classes=" << cfg.num_classes << '\n';
  os << "input_channels=" << cfg.input_channels << '\n';
  os << "input_resolution=" << cfg.input_resolution << '\n';
  os << "k_mode=" << to_string(cfg.k_mode) << '\n';
  os << "fixed_k=" << cfg.fixed_k << '\n';
  os << "use_filter=" << (cfg.use_filter ? "true" : "false") << '\n';
  os << "expansion=" << cfg.expansion << '\n';
  os << "norm_enabled=" << (cfg.norm_enabled ? "true" : "false") << '\n';
  os << "boundary=" << to_string(cfg.boundary) << '\n';
  return os.str();
}

}  // namespace hcnet
