#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hcnet/model.hpp"
#include "hcnet/optimizer.hpp"

namespace hcnet {

// Binary checkpoint: magic + version header, a ModelConfig echo, the named
// learnable parameters as 32-bit little-endian floats, optional optimizer
// moments, the training RNG state and the epoch counter. Loading validates
// every name and shape against a model rebuilt from the embedded config, so
// a byte-identical save follows from a load.
namespace checkpoint {

constexpr char kMagic[8] = {'H', 'C', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

namespace detail {

template <typename V>
void put(std::ostream& out, V value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);  // little-endian host
}

template <typename V>
V get(std::istream& in, const std::string& what) {
  V value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw ParseError("checkpoint truncated at byte offset " +
                            std::to_string(static_cast<long long>(in.tellg())) + " reading " + what);
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& what) {
  auto len = get<std::uint32_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw ParseError("checkpoint truncated reading " + what);
  return s;
}

inline void put_config(std::ostream& out, const ModelConfig& cfg) {
  for (int b : cfg.stage_blocks) put<std::int32_t>(out, b);
  for (int d : cfg.stage_dims) put<std::int32_t>(out, d);
  put<std::int32_t>(out, cfg.num_classes);
  put<std::int32_t>(out, cfg.input_channels);
  put<std::int32_t>(out, cfg.input_resolution);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.k_mode));
  put<double>(out, cfg.fixed_k);
  put<std::uint8_t>(out, cfg.use_filter ? 1 : 0);
  put<std::int32_t>(out, cfg.expansion);
  put<std::uint8_t>(out, cfg.norm_enabled ? 1 : 0);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.boundary));
}

inline ModelConfig get_config(std::istream& in) {
  ModelConfig cfg;
  for (int i = 0; i < 4; ++i) cfg.stage_blocks[i] = get<std::int32_t>(in, "stage blocks");
  for (int i = 0; i < 4; ++i) cfg.stage_dims[i] = get<std::int32_t>(in, "stage dims");
  cfg.num_classes = get<std::int32_t>(in, "num classes");
  cfg.input_channels = get<std::int32_t>(in, "input channels");
  cfg.input_resolution = get<std::int32_t>(in, "input resolution");
  auto k_mode = get<std::uint8_t>(in, "k mode");
  if (k_mode > 2) throw ParseError("checkpoint has invalid k mode byte " + std::to_string(k_mode));
  cfg.k_mode = static_cast<KMode>(k_mode);
  cfg.fixed_k = get<double>(in, "fixed k");
  cfg.use_filter = get<std::uint8_t>(in, "use filter") != 0;
  cfg.expansion = get<std::int32_t>(in, "expansion");
  cfg.norm_enabled = get<std::uint8_t>(in, "norm flag") != 0;
  auto boundary = get<std::uint8_t>(in, "boundary");
  if (boundary > 2)
    throw ParseError("checkpoint has invalid boundary byte " + std::to_string(boundary));
  cfg.boundary = static_cast<PaddingMode>(boundary);
  return cfg;
}

}  // namespace detail

template <typename T>
void save(const std::string& path, Model<T>& model, Optimizer<T>* optimizer,
          const std::string& rng_state, std::uint32_t epoch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  detail::put<std::uint32_t>(out, kVersion);
  detail::put_config(out, model.config);

  auto params = model.named_parameters();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (auto& [name, t] : params) {
    detail::put_string(out, name);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
    for (std::size_t d = 0; d < t.ndim(); ++d)
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim(d)));
    for (T v : t.values()) detail::put<float>(out, static_cast<float>(v));
  }

  detail::put<std::uint8_t>(out, optimizer ? 1 : 0);
  if (optimizer) {
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(optimizer->kind()));
    detail::put<std::uint64_t>(out, optimizer->state().step_count);
    auto& st = optimizer->state();
    std::uint8_t buffers = optimizer->kind() == OptimizerKind::adamw ? 2 : 1;
    detail::put<std::uint8_t>(out, buffers);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (T v : st.m[i]) detail::put<float>(out, static_cast<float>(v));
      if (buffers == 2)
        for (T v : st.v[i]) detail::put<float>(out, static_cast<float>(v));
    }
  }
  detail::put_string(out, rng_state);
  detail::put<std::uint32_t>(out, epoch);
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

template <typename T>
struct Loaded {
  Model<T> model;
  bool has_optimizer = false;
  OptimizerKind optimizer_kind = OptimizerKind::adamw;
  OptimizerState<T> optimizer_state;
  std::string rng_state;
  std::uint32_t epoch = 0;
};

template <typename T>
Loaded<T> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ParseError("'" + path + "' bad magic at byte offset 0: not an HcNet checkpoint");
  auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kVersion)
    throw ParseError("'" + path + "' unsupported checkpoint version " + std::to_string(version));

  Loaded<T> result{build_model<T>(detail::get_config(in), 0)};
  auto params = result.model.named_parameters();
  auto n = detail::get<std::uint32_t>(in, "parameter count");
  if (n != params.size())
    throw ParseError("checkpoint has " + std::to_string(n) + " parameters, config rebuilds " +
                     std::to_string(params.size()));
  for (std::size_t i = 0; i < n; ++i) {
    std::string name = detail::get_string(in, "parameter name");
    if (name != params[i].first)
      throw ParseError("checkpoint parameter '" + name + "' does not match expected '" +
                       params[i].first + "'");
    auto ndim = detail::get<std::uint8_t>(in, "rank of " + name);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::get<std::uint32_t>(in, "shape of " + name);
    if (shape != params[i].second.shape())
      throw ParseError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                       ", config wants " + shape_str(params[i].second.shape()));
    auto& dst = params[i].second.leaf_values();
    for (auto& v : dst) v = static_cast<T>(detail::get<float>(in, name + " values"));
  }

  result.has_optimizer = detail::get<std::uint8_t>(in, "optimizer flag") != 0;
  if (result.has_optimizer) {
    result.optimizer_kind = static_cast<OptimizerKind>(detail::get<std::uint8_t>(in, "optimizer kind"));
    result.optimizer_state.step_count = detail::get<std::uint64_t>(in, "optimizer step count");
    auto buffers = detail::get<std::uint8_t>(in, "optimizer buffer count");
    result.optimizer_state.m.resize(n);
    if (buffers == 2) result.optimizer_state.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      result.optimizer_state.m[i].resize(params[i].second.numel());
      for (auto& v : result.optimizer_state.m[i])
        v = static_cast<T>(detail::get<float>(in, "optimizer m"));
      if (buffers == 2) {
        result.optimizer_state.v[i].resize(params[i].second.numel());
        for (auto& v : result.optimizer_state.v[i])
          v = static_cast<T>(detail::get<float>(in, "optimizer v"));
      }
    }
  }
  result.rng_state = detail::get_string(in, "rng state");
  result.epoch = detail::get<std::uint32_t>(in, "epoch");
  return result;
}

}  // namespace checkpoint
}  // namespace hcnet
