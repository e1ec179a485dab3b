#pragma once

#include <string>

#include "hcnet/pde.hpp"

namespace hcnet {

// Plain-text CSV, row-major: one grid row (fixed x index) per line.
pde::TemperatureField read_grid_csv(const std::string& path);
void write_grid_csv(const pde::TemperatureField& field, const std::string& path);

// 8-bit binary PGM (P5), min-max normalized; constant fields map to 0.
void write_grid_pgm(const pde::TemperatureField& field, const std::string& path);

}  // namespace hcnet
