#include "hcnet/pde.hpp"

#include <cmath>
#include <sstream>

#include "hcnet/tensor.hpp"  // gelu_scalar

namespace hcnet::pde {

void TemperatureField::validate() const {
  if (nx < 3 || ny < 3)
    throw DimensionError("temperature field must be at least 3x3, got " + std::to_string(nx) +
                         "x" + std::to_string(ny));
  if (values.size() != nx * ny)
    throw DimensionError("temperature field storage does not match extents");
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("temperature field contains non-finite values");
}

double stability_ratio(const TemperatureField& field, const FdmConfig& cfg) {
  return cfg.dt * (cfg.alpha_x1 + cfg.alpha_x2) / (field.dx * field.dx) +
         cfg.dt * (cfg.alpha_y1 + cfg.alpha_y2) / (field.dy * field.dy);
}

static void check_config(const TemperatureField& field, const FdmConfig& cfg) {
  field.validate();
  if (cfg.alpha_x1 < 0 || cfg.alpha_x2 < 0 || cfg.alpha_y1 < 0 || cfg.alpha_y2 < 0)
    throw ConfigError("diffusivities must be non-negative");
  if (cfg.dt <= 0) throw ConfigError("time step must be positive");
  double ratio = stability_ratio(field, cfg);
  if (ratio > 1.0 && !cfg.allow_unstable) {
    std::ostringstream os;
    os << "explicit scheme unstable: stability ratio " << ratio
       << " exceeds 1 (reduce dt or diffusivities, or pass the unsafe flag)";
    throw StabilityError(os.str());
  }
}

TemperatureField fdm_step(const TemperatureField& field, const FdmConfig& cfg) {
  check_config(field, cfg);
  TemperatureField out(field.nx, field.ny, field.dx, field.dy);
  const long nx = static_cast<long>(field.nx), ny = static_cast<long>(field.ny);
  const double rx = cfg.dt / (field.dx * field.dx);
  const double ry = cfg.dt / (field.dy * field.dy);
  auto fetch = [&](long i, long j) -> double {
    i = resolve_index(i, nx, cfg.boundary);
    j = resolve_index(j, ny, cfg.boundary);
    if (i < 0 || j < 0) return 0.0;  // zero padding = Dirichlet boundary
    return field.values[i * ny + j];
  };
  for (long i = 0; i < nx; ++i)
    for (long j = 0; j < ny; ++j) {
      double u = field.values[i * ny + j];
      double flux = rx * (cfg.alpha_x1 * (fetch(i + 1, j) - u) + cfg.alpha_x2 * (fetch(i - 1, j) - u)) +
                    ry * (cfg.alpha_y1 * (fetch(i, j + 1) - u) + cfg.alpha_y2 * (fetch(i, j - 1) - u));
      out.values[i * ny + j] = u + flux;
    }
  return out;
}

TemperatureField fdm_solve(const TemperatureField& field, const FdmConfig& cfg) {
  if (cfg.steps < 0) throw ConfigError("step count must be non-negative");
  TemperatureField u = field;
  for (int s = 0; s < cfg.steps; ++s) u = fdm_step(u, cfg);
  return u;
}

// -------------------------------------------------------------------------
// Fourier series

FourierSolution fit_fourier(const TemperatureField& field, double domain_length,
                            std::size_t modes_m, std::size_t modes_n, double diffusivity) {
  field.validate();
  if (domain_length <= 0) throw ConfigError("domain length must be positive");
  if (modes_m == 0 || modes_n == 0) throw ConfigError("mode counts must be positive");
  if (modes_m > field.nx || modes_n > field.ny)
    throw ConfigError("requested " + std::to_string(modes_m) + "x" + std::to_string(modes_n) +
                      " modes exceed the Nyquist limit of a " + std::to_string(field.nx) + "x" +
                      std::to_string(field.ny) + " grid");
  const std::size_t nx = field.nx, ny = field.ny;
  // DST-I quadrature against interior nodes: exact for band-limited fields
  std::vector<double> sx(modes_m * nx), sy(modes_n * ny);
  for (std::size_t m = 0; m < modes_m; ++m)
    for (std::size_t i = 0; i < nx; ++i)
      sx[m * nx + i] = std::sin((m + 1) * M_PI * (i + 1) / static_cast<double>(nx + 1));
  for (std::size_t n = 0; n < modes_n; ++n)
    for (std::size_t j = 0; j < ny; ++j)
      sy[n * ny + j] = std::sin((n + 1) * M_PI * (j + 1) / static_cast<double>(ny + 1));

  FourierSolution sol;
  sol.modes_m = modes_m;
  sol.modes_n = modes_n;
  sol.domain_length = domain_length;
  sol.diffusivity = diffusivity;
  sol.coeff.assign(modes_m * modes_n, 0.0);

  // contract rows first, then columns
  std::vector<double> partial(modes_m * ny, 0.0);
  for (std::size_t m = 0; m < modes_m; ++m)
    for (std::size_t i = 0; i < nx; ++i) {
      double w = sx[m * nx + i];
      const double* row = field.values.data() + i * ny;
      double* acc = partial.data() + m * ny;
      for (std::size_t j = 0; j < ny; ++j) acc[j] += w * row[j];
    }
  double norm = 4.0 / (static_cast<double>(nx + 1) * static_cast<double>(ny + 1));
  for (std::size_t m = 0; m < modes_m; ++m)
    for (std::size_t n = 0; n < modes_n; ++n) {
      double acc = 0.0;
      const double* p = partial.data() + m * ny;
      const double* s = sy.data() + n * ny;
      for (std::size_t j = 0; j < ny; ++j) acc += p[j] * s[j];
      sol.coeff[m * modes_n + n] = norm * acc;
    }
  return sol;
}

TemperatureField eval_fourier(const FourierSolution& sol, double t, std::size_t nx, std::size_t ny) {
  if (t < 0) throw ConfigError("evaluation time must be non-negative");
  const double L = sol.domain_length;
  TemperatureField out(nx, ny, L / (nx + 1), L / (ny + 1));
  std::vector<double> sx(sol.modes_m * nx), sy(sol.modes_n * ny), decay(sol.modes_m * sol.modes_n);
  for (std::size_t m = 0; m < sol.modes_m; ++m)
    for (std::size_t i = 0; i < nx; ++i)
      sx[m * nx + i] = std::sin((m + 1) * M_PI * (i + 1) / static_cast<double>(nx + 1));
  for (std::size_t n = 0; n < sol.modes_n; ++n)
    for (std::size_t j = 0; j < ny; ++j)
      sy[n * ny + j] = std::sin((n + 1) * M_PI * (j + 1) / static_cast<double>(ny + 1));
  for (std::size_t m = 0; m < sol.modes_m; ++m)
    for (std::size_t n = 0; n < sol.modes_n; ++n) {
      double mm = static_cast<double>(m + 1), nn = static_cast<double>(n + 1);
      decay[m * sol.modes_n + n] =
          std::exp(-sol.diffusivity * (mm * mm + nn * nn) * M_PI * M_PI * t / (L * L));
    }
  // accumulate mode by mode: u += B_mn * decay * sx_m ⊗ sy_n
  std::vector<double> row(ny);
  for (std::size_t m = 0; m < sol.modes_m; ++m) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t n = 0; n < sol.modes_n; ++n) {
      double amp = sol.coeff[m * sol.modes_n + n] * decay[m * sol.modes_n + n];
      if (amp == 0.0) continue;
      for (std::size_t j = 0; j < ny; ++j) row[j] += amp * sy[n * ny + j];
    }
    for (std::size_t i = 0; i < nx; ++i) {
      double w = sx[m * nx + i];
      double* dst = out.values.data() + i * ny;
      for (std::size_t j = 0; j < ny; ++j) dst[j] += w * row[j];
    }
  }
  return out;
}

double superposition_residual(const TemperatureField& u1, const TemperatureField& u2, double a,
                              double b, const FdmConfig& cfg) {
  if (u1.nx != u2.nx || u1.ny != u2.ny || u1.dx != u2.dx || u1.dy != u2.dy)
    throw DimensionError("superposition: grids do not match");
  TemperatureField combo(u1.nx, u1.ny, u1.dx, u1.dy);
  for (std::size_t i = 0; i < combo.values.size(); ++i)
    combo.values[i] = a * u1.values[i] + b * u2.values[i];
  TemperatureField lhs = fdm_solve(combo, cfg);
  TemperatureField r1 = fdm_solve(u1, cfg);
  TemperatureField r2 = fdm_solve(u2, cfg);
  double residual = 0.0;
  for (std::size_t i = 0; i < lhs.values.size(); ++i)
    residual = std::max(residual, std::abs(lhs.values[i] - a * r1.values[i] - b * r2.values[i]));
  return residual;
}

// -------------------------------------------------------------------------
// harmonic spectrum

Nonlinearity nonlinearity_from_string(const std::string& s) {
  if (s == "identity") return Nonlinearity::identity;
  if (s == "square") return Nonlinearity::square;
  if (s == "gelu") return Nonlinearity::gelu;
  throw ConfigError("unknown nonlinearity '" + s + "' (want identity|square|gelu)");
}

double Spectrum::total() const {
  double acc = 0.0;
  for (double e : energies) acc += e;
  return acc;
}

double Spectrum::total_off_dc() const { return total() - energies[0]; }

Spectrum harmonic_spectrum(std::size_t mode_m, std::size_t mode_n, double domain_length,
                           Nonlinearity nonlinearity, std::size_t resolution) {
  if (mode_m == 0 || mode_n == 0) throw ConfigError("mode indices start at 1");
  if (domain_length <= 0) throw ConfigError("domain length must be positive");
  std::size_t needed = 4 * std::max(mode_m, mode_n);
  if (resolution < needed)
    throw ConfigError("resolution " + std::to_string(resolution) +
                      " aliases mode (" + std::to_string(mode_m) + "," + std::to_string(mode_n) +
                      "); need at least " + std::to_string(needed));
  if (resolution % 2 != 0) throw ConfigError("resolution must be even");

  const std::size_t R = resolution;
  // The sine mode is periodic over [0, 2L); sample the full period so the
  // equispaced cos/sin projections are exactly orthogonal.
  std::vector<double> f(R * R);
  for (std::size_t i = 0; i < R; ++i) {
    double zx = std::sin(2.0 * M_PI * mode_m * i / static_cast<double>(R));
    for (std::size_t j = 0; j < R; ++j) {
      double zy = std::sin(2.0 * M_PI * mode_n * j / static_cast<double>(R));
      double z = zx * zy;
      switch (nonlinearity) {
        case Nonlinearity::identity: break;
        case Nonlinearity::square: z = z * z; break;
        case Nonlinearity::gelu: z = gelu_scalar(z); break;
      }
      f[i * R + j] = z;
    }
  }
  return field_spectrum(f, R);
}

Spectrum field_spectrum(const std::vector<double>& f, std::size_t grid_resolution) {
  const std::size_t R = grid_resolution;
  if (R < 2 || R % 2 != 0) throw ConfigError("spectrum grid resolution must be even and >= 2");
  if (f.size() != R * R) throw DimensionError("field_spectrum: samples do not fill the grid");

  const std::size_t bins = R / 2 + 1;
  std::vector<double> ct(bins * R), st(bins * R);
  for (std::size_t p = 0; p < bins; ++p)
    for (std::size_t i = 0; i < R; ++i) {
      double ang = 2.0 * M_PI * p * i / static_cast<double>(R);
      ct[p * R + i] = std::cos(ang);
      st[p * R + i] = std::sin(ang);
    }
  auto axis_norm_cos = [&](std::size_t p) { return (p == 0 || p == R / 2) ? double(R) : R / 2.0; };
  auto axis_norm_sin = [&](std::size_t p) { return (p == 0 || p == R / 2) ? 0.0 : R / 2.0; };

  // contract x axis
  std::vector<double> ac(bins * R, 0.0), as(bins * R, 0.0);
  for (std::size_t p = 0; p < bins; ++p)
    for (std::size_t i = 0; i < R; ++i) {
      double c = ct[p * R + i], s = st[p * R + i];
      const double* row = f.data() + i * R;
      double* accc = ac.data() + p * R;
      double* accs = as.data() + p * R;
      for (std::size_t j = 0; j < R; ++j) {
        accc[j] += c * row[j];
        accs[j] += s * row[j];
      }
    }

  Spectrum spec;
  spec.resolution = bins;
  spec.energies.assign(bins * bins, 0.0);
  double inv_cells = 1.0 / static_cast<double>(R * R);
  for (std::size_t p = 0; p < bins; ++p)
    for (std::size_t q = 0; q < bins; ++q) {
      double e = 0.0;
      double ncx = axis_norm_cos(p), nsx = axis_norm_sin(p);
      double ncy = axis_norm_cos(q), nsy = axis_norm_sin(q);
      auto project = [&](const double* partial, const double* basis) {
        double acc = 0.0;
        for (std::size_t j = 0; j < R; ++j) acc += partial[j] * basis[j];
        return acc;
      };
      double raw;
      if (ncx > 0 && ncy > 0) {
        raw = project(ac.data() + p * R, ct.data() + q * R);
        e += raw * raw / (ncx * ncy);
      }
      if (ncx > 0 && nsy > 0) {
        raw = project(ac.data() + p * R, st.data() + q * R);
        e += raw * raw / (ncx * nsy);
      }
      if (nsx > 0 && ncy > 0) {
        raw = project(as.data() + p * R, ct.data() + q * R);
        e += raw * raw / (nsx * ncy);
      }
      if (nsx > 0 && nsy > 0) {
        raw = project(as.data() + p * R, st.data() + q * R);
        e += raw * raw / (nsx * nsy);
      }
      spec.energies[p * bins + q] = e * inv_cells;
    }
  return spec;
}

}  // namespace hcnet::pde
