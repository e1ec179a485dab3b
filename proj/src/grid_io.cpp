#include "hcnet/grid_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "hcnet/errors.hpp"

namespace hcnet {

pde::TemperatureField read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("grid file '" + path + "' line " + std::to_string(lineno) +
                         ": cannot parse '" + cell + "' as a number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("grid file '" + path + "' line " + std::to_string(lineno) + ": expected " +
                       std::to_string(rows.front().size()) + " columns, got " +
                       std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("grid file '" + path + "' is empty");
  pde::TemperatureField field(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < field.nx; ++i)
    for (std::size_t j = 0; j < field.ny; ++j) field.at(i, j) = rows[i][j];
  return field;
}

void write_grid_csv(const pde::TemperatureField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grid file '" + path + "'");
  out.precision(17);
  for (std::size_t i = 0; i < field.nx; ++i) {
    for (std::size_t j = 0; j < field.ny; ++j) {
      if (j) out << ',';
      out << field.at(i, j);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing grid file '" + path + "'");
}

void write_grid_pgm(const pde::TemperatureField& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file '" + path + "'");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : field.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span = hi - lo;
  out << "P5\n" << field.ny << ' ' << field.nx << "\n255\n";
  std::vector<unsigned char> row(field.ny);
  for (std::size_t i = 0; i < field.nx; ++i) {
    for (std::size_t j = 0; j < field.ny; ++j) {
      double v = span > 0 ? (field.at(i, j) - lo) / span : 0.0;
      row[j] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing image file '" + path + "'");
}

}  // namespace hcnet
