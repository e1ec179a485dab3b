#pragma once

#include <cstddef>
#include <vector>

#include "hcnet/errors.hpp"
#include "hcnet/padding.hpp"

namespace hcnet::pde {

// Classical solvers for the 2-D anisotropic heat equation
//   du/dt = ax * d2u/dx2 + ay * d2u/dy2
// discretized with one-sided diffusivities per direction. These run in
// double precision only and serve as ground truth for the neural layers.

// Grid samples u(x_i, y_j), row-major values[i*ny + j]; i runs along x,
// j along y. Under Dirichlet (zero) boundary the samples live on interior
// nodes x_i = (i+1)*dx of a domain of length L = (nx+1)*dx, so the zero
// padding coincides with the physical boundary.
struct TemperatureField {
  std::size_t nx = 0, ny = 0;
  double dx = 1.0, dy = 1.0;
  std::vector<double> values;

  TemperatureField() = default;
  TemperatureField(std::size_t nx_, std::size_t ny_, double dx_ = 1.0, double dy_ = 1.0)
      : nx(nx_), ny(ny_), dx(dx_), dy(dy_), values(nx_ * ny_, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return values[i * ny + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * ny + j]; }
  void validate() const;
};

struct FdmConfig {
  // one-sided diffusivities: x1 pairs with u(i+1,j), x2 with u(i-1,j),
  // y1 with u(i,j+1), y2 with u(i,j-1)
  double alpha_x1 = 0.25, alpha_x2 = 0.25, alpha_y1 = 0.25, alpha_y2 = 0.25;
  double dt = 0.1;
  int steps = 1;
  PaddingMode boundary = PaddingMode::zero;
  bool allow_unstable = false;
};

// dt*(ax1+ax2)/dx^2 + dt*(ay1+ay2)/dy^2; the explicit scheme keeps a
// non-negative center coefficient iff this is <= 1.
double stability_ratio(const TemperatureField& field, const FdmConfig& cfg);

// One explicit update over every grid point.
TemperatureField fdm_step(const TemperatureField& field, const FdmConfig& cfg);

// cfg.steps applications of fdm_step.
TemperatureField fdm_solve(const TemperatureField& field, const FdmConfig& cfg);

// Double sine series on a square domain of side L with homogeneous
// Dirichlet boundary:
//   u(x,y,t) = sum_mn B_mn sin(m pi x/L) sin(n pi y/L)
//              * exp(-k (m^2+n^2) pi^2 t / L^2)
struct FourierSolution {
  std::size_t modes_m = 0, modes_n = 0;
  double domain_length = 1.0;  // L
  double diffusivity = 1.0;    // k in the exponent
  std::vector<double> coeff;   // [modes_m, modes_n], B_mn at coeff[(m-1)*modes_n + (n-1)]

  double b(std::size_t m, std::size_t n) const { return coeff[(m - 1) * modes_n + (n - 1)]; }
};

// Fits B_mn by discrete double sine quadrature of the initial condition.
// The field must sample interior nodes of [0,L]^2 (see TemperatureField).
FourierSolution fit_fourier(const TemperatureField& field, double domain_length, std::size_t modes_m,
                            std::size_t modes_n, double diffusivity);

// Sums the series at time t on an nx-by-ny interior-node grid.
TemperatureField eval_fourier(const FourierSolution& sol, double t, std::size_t nx, std::size_t ny);

// max |fdm_solve(a*u1 + b*u2) - a*fdm_solve(u1) - b*fdm_solve(u2)|
double superposition_residual(const TemperatureField& u1, const TemperatureField& u2, double a,
                              double b, const FdmConfig& cfg);

enum class Nonlinearity { identity, square, gelu };

Nonlinearity nonlinearity_from_string(const std::string& s);

// Separable cosine/sine spectrum of f(sin(m pi x/L) sin(n pi y/L)) on
// [0,L]^2, sampled at midpoint nodes. energy(p,q) aggregates the four
// parity combinations (cos/sin per axis) at frequency pair (p,q);
// sum of all energies equals the mean square of the samples.
struct Spectrum {
  std::size_t resolution = 0;             // frequencies 0 .. resolution-1 per axis
  std::vector<double> energies;           // [resolution, resolution]
  double energy(std::size_t p, std::size_t q) const { return energies[p * resolution + q]; }
  double total() const;
  double total_off_dc() const;
};

Spectrum harmonic_spectrum(std::size_t mode_m, std::size_t mode_n, double domain_length,
                           Nonlinearity nonlinearity, std::size_t resolution = 64);

// Same projection machinery for an arbitrary real field sampled on the full
// R x R periodic grid (row-major).
Spectrum field_spectrum(const std::vector<double>& samples, std::size_t grid_resolution);

}  // namespace hcnet::pde
