#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "hcnet/random.hpp"
#include "hcnet/tensor.hpp"

namespace hcnet::gradcheck {

// Central finite-difference comparison against the tape gradients. The
// numeric side only ever calls the forward path, so it stays independent of
// the backward rules it is checking. 64-bit tensors only; the default step
// 1e-6 needs that headroom.

struct Report {
  double max_rel_err = 0.0;
  double max_abs_err_small = 0.0;  // elements with |analytic| below the floor
  std::size_t checked = 0;
  std::string worst;

  bool pass(double rel_tol, double abs_floor = 1e-8) const {
    return checked > 0 && max_rel_err <= rel_tol && max_abs_err_small <= abs_floor;
  }

  void merge(const Report& o) {
    if (o.max_rel_err > max_rel_err) {
      max_rel_err = o.max_rel_err;
      worst = o.worst;
    }
    max_abs_err_small = std::max(max_abs_err_small, o.max_abs_err_small);
    checked += o.checked;
  }
};

namespace detail {

inline void record(Report& rep, double analytic, double numeric, const std::string& where,
                   double abs_floor) {
  double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < abs_floor) {
    rep.max_abs_err_small = std::max(rep.max_abs_err_small, std::abs(analytic - numeric));
  } else {
    double rel = std::abs(analytic - numeric) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      std::ostringstream os;
      os << where << " analytic=" << analytic << " numeric=" << numeric;
      rep.worst = os.str();
    }
  }
  ++rep.checked;
}

}  // namespace detail

// Checks d loss / d input[element] for the listed (tensor, element) pairs.
// `loss_fn` must rebuild the graph from the current leaf values on each call.
template <typename F>
Report check_elements(F&& loss_fn, const std::vector<std::pair<Tensor<double>, std::size_t>>& elems,
                      double step = 1e-6, double abs_floor = 1e-8) {
  for (const auto& [t, idx] : elems) {
    Tensor<double> leaf = t;
    leaf.zero_grad();
  }
  Tensor<double> loss = loss_fn();
  loss.backward();
  std::vector<double> analytic(elems.size());
  for (std::size_t i = 0; i < elems.size(); ++i)
    analytic[i] = elems[i].first.grad()[elems[i].second];

  Report rep;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < elems.size(); ++i) {
    Tensor<double> leaf = elems[i].first;
    std::size_t idx = elems[i].second;
    double saved = leaf.values()[idx];
    leaf.leaf_values()[idx] = saved + step;
    double up = loss_fn().item();
    leaf.leaf_values()[idx] = saved - step;
    double down = loss_fn().item();
    leaf.leaf_values()[idx] = saved;
    double numeric = (up - down) / (2.0 * step);
    detail::record(rep, analytic[i], numeric, "elem " + std::to_string(idx), abs_floor);
  }
  return rep;
}

// Every element of every listed input.
template <typename F>
Report check_all(F&& loss_fn, const std::vector<Tensor<double>>& inputs, double step = 1e-6,
                 double abs_floor = 1e-8) {
  std::vector<std::pair<Tensor<double>, std::size_t>> elems;
  for (const auto& t : inputs)
    for (std::size_t i = 0; i < t.numel(); ++i) elems.emplace_back(t, i);
  return check_elements(loss_fn, elems, step, abs_floor);
}

// A seeded random subset of `total` elements drawn across all inputs,
// proportional to nothing in particular; used for large parameter sets.
template <typename F>
Report check_sampled(F&& loss_fn, const std::vector<Tensor<double>>& inputs, std::size_t total,
                     std::uint64_t seed, double step = 1e-6, double abs_floor = 1e-8) {
  std::size_t numel = 0;
  for (const auto& t : inputs) numel += t.numel();
  if (total >= numel) return check_all(loss_fn, inputs, step, abs_floor);
  Rng rng(seed);
  std::vector<std::pair<Tensor<double>, std::size_t>> elems;
  elems.reserve(total);
  for (std::size_t s = 0; s < total; ++s) {
    std::size_t flat = static_cast<std::size_t>(rng.below(numel));
    for (const auto& t : inputs) {
      if (flat < t.numel()) {
        elems.emplace_back(t, flat);
        break;
      }
      flat -= t.numel();
    }
  }
  return check_elements(loss_fn, elems, step, abs_floor);
}

}  // namespace hcnet::gradcheck
