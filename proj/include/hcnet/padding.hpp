#pragma once

#include <cstddef>
#include <string>

#include "hcnet/errors.hpp"

namespace hcnet {

// Boundary semantics shared by the neural stencil/conv kernels and the PDE
// solvers, so a layer and its oracle see identical edge behaviour.
enum class PaddingMode { replicate, periodic, zero };

inline std::string to_string(PaddingMode mode) {
  switch (mode) {
    case PaddingMode::replicate: return "replicate";
    case PaddingMode::periodic: return "periodic";
    case PaddingMode::zero: return "zero";
  }
  return "?";
}

inline PaddingMode padding_mode_from_string(const std::string& s) {
  if (s == "replicate") return PaddingMode::replicate;
  if (s == "periodic") return PaddingMode::periodic;
  if (s == "zero") return PaddingMode::zero;
  throw ConfigError("unknown boundary mode '" + s + "' (want replicate|periodic|zero)");
}

// Resolves an out-of-range index against an extent. Returns -1 for zero
// padding (caller substitutes 0).
inline long resolve_index(long i, long extent, PaddingMode mode) {
  if (i >= 0 && i < extent) return i;
  switch (mode) {
    case PaddingMode::replicate:
      return i < 0 ? 0 : extent - 1;
    case PaddingMode::periodic:
      i %= extent;
      return i < 0 ? i + extent : i;
    case PaddingMode::zero:
      return -1;
  }
  return -1;
}

}  // namespace hcnet
