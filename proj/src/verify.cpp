#include "hcnet/verify.hpp"

#include <cmath>
#include <sstream>

#include "hcnet/gradcheck.hpp"
#include "hcnet/hc_layer.hpp"
#include "hcnet/model.hpp"
#include "hcnet/pde.hpp"
#include "hcnet/ra_layer.hpp"

namespace hcnet::verify {

namespace {

using pde::FdmConfig;
using pde::TemperatureField;
using T64 = Tensor<double>;

TemperatureField sine_mode(std::size_t n, double L, int m_mode, int n_mode) {
  TemperatureField f(n, n, L / (n + 1), L / (n + 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      f.at(i, j) = std::sin(m_mode * M_PI * (i + 1) / double(n + 1)) *
                   std::sin(n_mode * M_PI * (j + 1) / double(n + 1));
  return f;
}

TemperatureField random_field(std::size_t nx, std::size_t ny, Rng& rng) {
  TemperatureField f(nx, ny);
  for (auto& v : f.values) v = rng.uniform(-1.0, 1.0);
  return f;
}

// Isotropic unit-diffusivity FDM of mode (1,1) on an n^2 Dirichlet grid,
// integrated to exactly t_end; returns the fitted amplitude of the mode.
double fdm_mode_amplitude(std::size_t n, double L, double t_end, double step_ratio) {
  TemperatureField init = sine_mode(n, L, 1, 1);
  double h = init.dx;
  int steps = static_cast<int>(std::ceil(t_end / (step_ratio * h * h)));
  FdmConfig cfg;
  cfg.alpha_x1 = cfg.alpha_x2 = cfg.alpha_y1 = cfg.alpha_y2 = 1.0;
  cfg.dt = t_end / steps;
  cfg.steps = steps;
  cfg.boundary = PaddingMode::zero;
  TemperatureField evolved = pde::fdm_solve(init, cfg);
  return pde::fit_fourier(evolved, L, 1, 1, 1.0).b(1, 1);
}

// Exact amplitude of the spatially-discretized single-mode problem (the
// closed-form solution of the semi-discrete system).
double semi_discrete_amplitude(std::size_t n, double L, double t) {
  double h = L / (n + 1);
  double lambda_axis = 4.0 / (h * h) * std::pow(std::sin(M_PI * h / (2.0 * L)), 2);
  return std::exp(-2.0 * lambda_axis * t);
}

Check make_check(const std::string& name, double measured, double threshold,
                 const std::string& note = "") {
  Check c;
  c.name = name;
  c.measured = measured;
  c.threshold = threshold;
  c.pass = measured <= threshold;
  c.note = note;
  return c;
}

}  // namespace

Suite oracle_suite() {
  Suite suite{"oracle", {}};
  const double L = M_PI;

  // single mode, k=1, L=pi: exponent k(m^2+n^2)pi^2 t/L^2 = 2t, e^{-1} at t=0.5
  double amp = fdm_mode_amplitude(64, L, 0.5, 0.2);
  double target = std::exp(-1.0);
  suite.checks.push_back(make_check("fourier-mode decay to e^-1 (64x64, t=0.5)",
                                    std::abs(amp - target) / target, 1e-2));

  {
    TemperatureField init = sine_mode(64, L, 1, 1);
    double h = init.dx;
    int steps = static_cast<int>(std::ceil(0.5 / (0.2 * h * h)));
    FdmConfig cfg;
    cfg.alpha_x1 = cfg.alpha_x2 = cfg.alpha_y1 = cfg.alpha_y2 = 1.0;
    cfg.dt = 0.5 / steps;
    cfg.steps = steps;
    cfg.boundary = PaddingMode::zero;
    TemperatureField fdm = pde::fdm_solve(init, cfg);
    TemperatureField exact = pde::eval_fourier(pde::fit_fourier(init, L, 1, 1, 1.0), 0.5, 64, 64);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < fdm.values.size(); ++i) {
      double d = fdm.values[i] - exact.values[i];
      num += d * d;
      den += exact.values[i] * exact.values[i];
    }
    suite.checks.push_back(
        make_check("FDM vs Fourier relative L2 (64x64 Dirichlet)", std::sqrt(num / den), 1e-2));
  }

  {
    // 20 random nonnegative weight/k draws: the HC layer must equal fdm_step
    Rng rng(20240817);
    PaddingMode modes[3] = {PaddingMode::replicate, PaddingMode::periodic, PaddingMode::zero};
    double worst = 0;
    for (int draw = 0; draw < 20; ++draw) {
      double w[4];
      for (auto& x : w) x = rng.uniform(0.0, 1.5);
      double k = rng.uniform(0.01, 1.0);
      TemperatureField f = random_field(7, 6, rng);
      auto z = T64::from_vector({1, 7, 6}, f.values);
      auto p = HcLayerParams<double>::init(1, KMode::fixed, k);
      p.stencil_w = T64::from_vector({1, 4}, {w[0], w[1], w[2], w[3]}, true);
      auto out = hc_forward(z, p, modes[draw % 3]);
      FdmConfig cfg;
      cfg.alpha_x1 = w[0];
      cfg.alpha_x2 = w[1];
      cfg.alpha_y1 = w[2];
      cfg.alpha_y2 = w[3];
      cfg.dt = k;
      cfg.boundary = modes[draw % 3];
      cfg.allow_unstable = true;
      TemperatureField oracle = pde::fdm_step(f, cfg);
      for (std::size_t i = 0; i < oracle.values.size(); ++i)
        worst = std::max(worst, std::abs(out.values()[i] - oracle.values[i]));
    }
    suite.checks.push_back(
        make_check("HC layer vs fdm_step, 20 draws, max |diff|", worst, 1e-12));
  }
  return suite;
}

Suite conservation_suite() {
  Suite suite{"conservation", {}};
  Rng rng(7);

  {
    TemperatureField u = random_field(32, 32, rng);
    FdmConfig cfg;
    cfg.alpha_x1 = 0.35;
    cfg.alpha_x2 = 0.15;
    cfg.alpha_y1 = 0.22;
    cfg.alpha_y2 = 0.26;
    cfg.dt = 1.0;
    cfg.boundary = PaddingMode::periodic;
    double sum0 = 0;
    for (double v : u.values) sum0 += v;
    double drift = 0;
    for (int s = 0; s < 100; ++s) {
      u = pde::fdm_step(u, cfg);
      double sum = 0;
      for (double v : u.values) sum += v;
      drift = std::max(drift, std::abs(sum - sum0) / std::max(1.0, std::abs(sum0)));
    }
    suite.checks.push_back(
        make_check("fdm_step periodic sum drift over 100 steps", drift, 1e-12));
  }

  {
    auto p = HcLayerParams<double>::init(3, KMode::fixed, 0.9);
    p.stencil_w = T64::rand_uniform({3, 4}, rng, 0.0, 0.25, true);
    auto z = T64::rand_uniform({3, 16, 16}, rng, -1.0, 1.0);
    std::vector<double> sums0(3, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 256; ++i) sums0[c] += z.values()[c * 256 + i];
    double drift = 0;
    NoGradGuard no_grad;
    for (int s = 0; s < 100; ++s) {
      z = hc_forward(z, p, PaddingMode::periodic);
      for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0;
        for (std::size_t i = 0; i < 256; ++i) sum += z.values()[c * 256 + i];
        drift = std::max(drift, std::abs(sum - sums0[c]) / std::max(1.0, std::abs(sums0[c])));
      }
    }
    suite.checks.push_back(
        make_check("hc_forward periodic per-channel sum drift over 100 steps", drift, 1e-12));
  }
  return suite;
}

Suite convergence_suite() {
  Suite suite{"convergence", {}};
  const double L = M_PI;
  const double t_end = 0.1;

  {
    // space: dt ~ h^2/16, error vs the continuum amplitude e^{-2t}
    double exact = std::exp(-2.0 * t_end);
    double e32 = std::abs(fdm_mode_amplitude(32, L, t_end, 1.0 / 16) - exact);
    double e64 = std::abs(fdm_mode_amplitude(64, L, t_end, 1.0 / 16) - exact);
    double order = std::log2(e32 / e64);
    suite.checks.push_back(make_check("space order |2 - measured| (32->64)",
                                      std::abs(order - 2.0), 0.3,
                                      "measured " + std::to_string(order)));
  }

  {
    // time: fixed 32^2 grid, error vs the exact semi-discrete amplitude
    const std::size_t n = 32;
    double h = L / (n + 1);
    double sd = semi_discrete_amplitude(n, L, t_end);
    int steps1 = static_cast<int>(std::ceil(t_end / (h * h / 8)));
    double e1 = std::abs(fdm_mode_amplitude(n, L, t_end, t_end / steps1 / (h * h)) - sd);
    double e2 = std::abs(fdm_mode_amplitude(n, L, t_end, t_end / (2 * steps1) / (h * h)) - sd);
    double order = std::log2(e1 / e2);
    suite.checks.push_back(make_check("time order |1 - measured| (dt halving)",
                                      std::abs(order - 1.0), 0.3,
                                      "measured " + std::to_string(order)));
  }
  return suite;
}

Suite spectrum_suite() {
  Suite suite{"spectrum", {}};
  {
    auto spec = pde::harmonic_spectrum(1, 1, 1.0, pde::Nonlinearity::square, 64);
    double off_dc = spec.total_off_dc();
    double picked = spec.energy(0, 2) + spec.energy(2, 0) + spec.energy(2, 2);
    std::ostringstream note;
    note << "pairs (0,2)=" << spec.energy(0, 2) << " (2,0)=" << spec.energy(2, 0)
         << " (2,2)=" << spec.energy(2, 2);
    suite.checks.push_back(make_check("squared mode energy off the doubled pairs",
                                      1.0 - picked / off_dc, 1e-3, note.str()));
  }
  {
    auto spec = pde::harmonic_spectrum(1, 1, 1.0, pde::Nonlinearity::gelu, 64);
    double outside = (spec.total() - spec.energy(1, 1)) / spec.total();
    Check c = make_check("gelu relative energy at new frequencies", outside, 0);
    c.pass = outside >= 1e-3;
    c.threshold = 1e-3;
    c.note = "pass iff measured >= threshold";
    suite.checks.push_back(c);
  }
  return suite;
}

Suite superposition_suite() {
  Suite suite{"superposition", {}};
  Rng rng(99);
  FdmConfig cfg;
  cfg.alpha_x1 = 0.3;
  cfg.alpha_x2 = 0.2;
  cfg.alpha_y1 = 0.28;
  cfg.alpha_y2 = 0.18;
  cfg.dt = 1.0;
  cfg.steps = 100;
  cfg.boundary = PaddingMode::replicate;

  double worst = 0;
  for (int draw = 0; draw < 5; ++draw) {
    TemperatureField u1 = random_field(24, 24, rng);
    TemperatureField u2 = random_field(24, 24, rng);
    double a = rng.uniform(-3.0, 3.0), b = rng.uniform(-3.0, 3.0);
    worst = std::max(worst, pde::superposition_residual(u1, u2, a, b, cfg));
  }
  suite.checks.push_back(
      make_check("linearity residual, 100 steps, 5 random (a,b) draws", worst, 1e-10));

  TemperatureField u1 = random_field(24, 24, rng);
  TemperatureField u2 = random_field(24, 24, rng);
  suite.checks.push_back(
      make_check("trivial combination a=1, b=0", pde::superposition_residual(u1, u2, 1.0, 0.0, cfg),
                 0.0));
  return suite;
}

std::vector<Suite> all_suites() {
  return {oracle_suite(), conservation_suite(), convergence_suite(), spectrum_suite(),
          superposition_suite()};
}

// ---------------------------------------------------------------------------
// gradient sweeps

Check gradcheck_ops() {
  Rng rng(123);
  gradcheck::Report rep;
  // mean-square losses keep the loss at O(1) so the finite-difference noise
  // floor stays far below the 1e-8 absolute comparison band
  auto mean_square = [](const T64& t) {
    return scalar_mul(sum(hadamard(t, t)), 1.0 / double(t.numel()));
  };

  {
    auto a = T64::rand_uniform({12}, rng, -2.0, 2.0, true);
    auto b = T64::rand_uniform({12}, rng, -2.0, 2.0, true);
    rep.merge(gradcheck::check_all(
        [&] {
          return mean_square(add(hadamard(a, b), scalar_mul(sub(a, b), 1.3)));
        },
        {a, b}));
  }
  {
    auto x = T64::rand_uniform({20}, rng, -2.0, 2.0, true);
    rep.merge(gradcheck::check_all([&] { return mean_square(gelu(x)); }, {x}));
    rep.merge(gradcheck::check_all([&] { return mean_square(sigmoid(x)); }, {x}));
    rep.merge(gradcheck::check_all([&] { return sum(reshape(hadamard(x, x), {4, 5})); }, {x}));
  }
  {
    auto a = T64::rand_uniform({4, 5}, rng, -1.0, 1.0, true);
    auto b = T64::rand_uniform({5, 3}, rng, -1.0, 1.0, true);
    rep.merge(gradcheck::check_all([&] { return mean_square(matmul(a, b)); }, {a, b}));
  }
  {
    auto x = T64::rand_uniform({6}, rng, -1.0, 1.0, true);
    auto w = T64::rand_uniform({6, 4}, rng, -0.5, 0.5, true);
    auto b = T64::rand_uniform({4}, rng, -0.5, 0.5, true);
    rep.merge(gradcheck::check_all([&] { return mean_square(linear(x, w, b)); }, {x, w, b}));
  }
  {
    auto x = T64::rand_uniform({3, 4, 4}, rng, -1.0, 1.0, true);
    auto w = T64::rand_uniform({3, 5}, rng, -0.5, 0.5, true);
    auto b = T64::rand_uniform({5}, rng, -0.5, 0.5, true);
    auto s = T64::rand_uniform({3}, rng, -1.0, 1.0, true);
    rep.merge(
        gradcheck::check_all([&] { return mean_square(channel_linear(x, w, b)); }, {x, w, b}));
    rep.merge(gradcheck::check_all([&] { return mean_square(scale_channels(x, s)); }, {x, s}));
    rep.merge(gradcheck::check_all([&] { return mean_square(global_avg_pool(x)); }, {x}));
  }
  {
    auto x = T64::rand_uniform({2, 6, 6}, rng, -1.0, 1.0, true);
    auto w = T64::rand_uniform({3, 2, 2, 2}, rng, -0.5, 0.5, true);
    auto b = T64::rand_uniform({3}, rng, -0.5, 0.5, true);
    rep.merge(gradcheck::check_all([&] { return mean_square(conv2d(x, w, b, 2)); }, {x, w, b}));
  }
  for (auto mode : {PaddingMode::replicate, PaddingMode::periodic, PaddingMode::zero}) {
    auto x = T64::rand_uniform({2, 5, 5}, rng, -1.0, 1.0, true);
    auto k = T64::rand_uniform({2, 3, 3}, rng, -0.5, 0.5, true);
    auto w = T64::rand_uniform({2, 4}, rng, -0.5, 0.5, true);
    rep.merge(gradcheck::check_all([&] { return mean_square(depthwise_conv2d(x, k, mode)); },
                                   {x, k}));
    rep.merge(gradcheck::check_all([&] { return mean_square(stencil5(x, w, mode)); }, {x, w}));
  }
  {
    auto x = T64::rand_uniform({4, 3, 3}, rng, -2.0, 2.0, true);
    auto g = T64::rand_uniform({4}, rng, 0.5, 1.5, true);
    auto b = T64::rand_uniform({4}, rng, -0.5, 0.5, true);
    rep.merge(gradcheck::check_all([&] { return mean_square(layer_norm_channels(x, g, b)); },
                                   {x, g, b}));
  }
  {
    auto logits = T64::rand_uniform({9}, rng, -2.0, 2.0, true);
    rep.merge(gradcheck::check_all([&] { return softmax_cross_entropy(logits, 4); }, {logits}));
  }
  {
    auto a = T64::rand_uniform({1}, rng, -2.0, 2.0, true);
    auto b = T64::rand_uniform({1}, rng, -2.0, 2.0, true);
    rep.merge(gradcheck::check_all(
        [&] {
          std::vector<T64> parts = {sum(hadamard(a, a)), sum(hadamard(b, b))};
          return mean_scalars(parts);
        },
        {a, b}));
  }

  Check c = make_check("tensor ops gradient sweep, max rel err", rep.max_rel_err, 1e-5,
                       std::to_string(rep.checked) + " elements");
  c.pass = rep.pass(1e-5);
  return c;
}

Check gradcheck_hc_layer() {
  Rng rng(31);
  gradcheck::Report rep;
  for (auto mode : {KMode::fixed, KMode::learnable, KMode::input_dependent}) {
    auto p = HcLayerParams<double>::init(3, mode, 0.4);
    p.stencil_w = T64::rand_uniform({3, 4}, rng, -0.5, 0.5, true);
    if (mode == KMode::input_dependent) {
      p.k_linear_weight = T64::randn({3, 3}, rng, 0.5, true);
      p.k_linear_bias = T64::randn({3}, rng, 0.2, true);
    }
    auto z = T64::rand_uniform({3, 6, 6}, rng, -1.0, 1.0, true);
    std::vector<T64> inputs = {z, p.stencil_w};
    if (mode == KMode::learnable) inputs.push_back(p.k_value);
    if (mode == KMode::input_dependent) {
      inputs.push_back(p.k_linear_weight);
      inputs.push_back(p.k_linear_bias);
    }
    rep.merge(gradcheck::check_all(
        [&] {
          auto out = hc_forward(z, p, PaddingMode::replicate);
          return sum(hadamard(out, out));
        },
        inputs));
  }
  Check c = make_check("hc-layer gradients (all k modes), max rel err", rep.max_rel_err, 1e-5,
                       std::to_string(rep.checked) + " elements");
  c.pass = rep.pass(1e-5);
  return c;
}

Check gradcheck_ra_layer() {
  Rng rng(37);
  gradcheck::Report rep;
  for (bool filter : {true, false}) {
    auto p = RaLayerParams<double>::init(2, 4, filter, rng);
    auto z = T64::rand_uniform({2, 4, 4}, rng, -1.0, 1.0, true);
    std::vector<T64> inputs = {z, p.expand_weight, p.expand_bias, p.contract_weight,
                               p.contract_bias};
    if (filter) inputs.push_back(p.filter_kernel);
    rep.merge(gradcheck::check_all(
        [&] {
          auto out = ra_forward(z, p);
          return sum(hadamard(out, out));
        },
        inputs));
  }
  Check c = make_check("ra-layer gradients (filter on/off), max rel err", rep.max_rel_err, 1e-5,
                       std::to_string(rep.checked) + " elements");
  c.pass = rep.pass(1e-5);
  return c;
}

Check gradcheck_model() {
  auto cfg = ModelConfig::preset("hcnet-nano");
  auto model = build_model<double>(cfg, 11);
  Rng rng(12);
  auto img0 = T64::rand_uniform({1, 32, 32}, rng, -1.0, 1.0);
  auto img1 = T64::rand_uniform({1, 32, 32}, rng, -1.0, 1.0);
  auto loss_fn = [&] {
    std::vector<T64> losses;
    losses.push_back(softmax_cross_entropy(model.forward_single(img0), 3));
    losses.push_back(softmax_cross_entropy(model.forward_single(img1), 7));
    return mean_scalars(losses);
  };
  auto rep = gradcheck::check_sampled(loss_fn, model.parameters(), 200, 1234);
  Check c = make_check("hcnet-nano end-to-end, 200 sampled params, max rel err", rep.max_rel_err,
                       1e-4, std::to_string(rep.checked) + " elements");
  c.pass = rep.pass(1e-4);
  return c;
}

std::string format(const Suite& suite) {
  std::ostringstream os;
  for (const auto& c : suite.checks) {
    os << (c.pass ? "[PASS] " : "[FAIL] ") << suite.name << ": " << c.name
       << "  measured=" << c.measured << " threshold=" << c.threshold;
    if (!c.note.empty()) os << "  (" << c.note << ")";
    os << '\n';
  }
  return os.str();
}

}  // namespace hcnet::verify
