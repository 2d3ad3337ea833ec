#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "synclip/optim.hpp"
#include "synclip/rng.hpp"

namespace synclip {

struct GradCheckRow {
  std::string param;
  double max_rel_err = 0;
  int coords_checked = 0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0;
  double tol = 0;
  std::string worst_param;
  std::vector<GradCheckRow> rows;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // If the model has more coordinates than max_coords, a random subsample of
  // at least min_coords is checked (spread over all parameters).
  int min_coords = 64;
  int max_coords = 512;
  uint64_t seed = 0x5eedc0de;
  // Relative error uses denominator max(|ad|, |fd|, rel_floor); the floor sets
  // the absolute-tolerance crossover for near-zero gradients.
  double rel_floor = 1e-3;
};

// Central-difference verification of reverse-mode gradients. `fn` must be a
// deterministic scalar function of the parameters (it is re-evaluated with
// perturbed entries, so any randomness has to be frozen by the caller).
inline GradCheckReport grad_check(const std::function<Value<double>(ParamStore<double>&)>& fn,
                                  ParamStore<double>& params, const GradCheckOptions& opt = {}) {
  check_contract(opt.h > 0, "grad_check: h must be positive");
  auto loss = fn(params);
  check_contract(loss.numel() == 1, "grad_check: fn must return a scalar");
  if (!std::isfinite(loss.item())) throw_numeric("grad_check: fn returned non-finite loss");
  GradMap<double> analytic = backward(loss, params);

  // flatten coordinate space: (param index, offset)
  std::vector<std::pair<std::string, int64_t>> spans;
  int64_t total = 0;
  for (const auto& [name, p] : params.all()) {
    spans.push_back({name, p.numel()});
    total += p.numel();
  }

  std::vector<std::pair<std::string, int64_t>> coords;  // (param, offset)
  if (total <= opt.max_coords) {
    for (const auto& [name, n] : spans)
      for (int64_t i = 0; i < n; ++i) coords.push_back({name, i});
  } else {
    Rng rng(opt.seed);
    const int want = std::max(opt.min_coords, opt.max_coords);
    for (int k = 0; k < want; ++k) {
      int64_t flat = int64_t(rng.uniform() * double(total));
      if (flat >= total) flat = total - 1;
      for (const auto& [name, n] : spans) {
        if (flat < n) {
          coords.push_back({name, flat});
          break;
        }
        flat -= n;
      }
    }
  }

  GradCheckReport report;
  report.tol = opt.tol;
  std::map<std::string, GradCheckRow> rows;
  for (const auto& [name, offset] : coords) {
    auto p = params.get(name);
    auto& theta = p.node()->value;
    const double orig = theta[size_t(offset)];
    theta[size_t(offset)] = orig + opt.h;
    const double f_plus = fn(params).item();
    theta[size_t(offset)] = orig - opt.h;
    const double f_minus = fn(params).item();
    theta[size_t(offset)] = orig;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw_numeric("grad_check: non-finite fn output while perturbing " + name);
    const double fd = (f_plus - f_minus) / (2 * opt.h);
    const double ad = analytic.at(name).data[size_t(offset)];
    const double denom = std::max({std::abs(ad), std::abs(fd), opt.rel_floor});
    const double rel = std::abs(ad - fd) / denom;
    auto& row = rows[name];
    row.param = name;
    row.coords_checked += 1;
    row.max_rel_err = std::max(row.max_rel_err, rel);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = name;
    }
  }
  for (auto& [k, row] : rows) report.rows.push_back(row);
  report.pass = report.max_rel_err <= opt.tol;
  return report;
}

}  // namespace synclip
