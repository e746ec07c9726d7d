#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "drnn/errors.hpp"
#include "drnn/estimators.hpp"
#include "drnn/validation.hpp"

namespace drnn {

struct Regime {
  enum class Kind { discrete, continuous } kind = Kind::discrete;
  int d = 1;  // factor dimension, used by the continuous regime only

  static Regime discrete() { return {Kind::discrete, 1}; }
  static Regime continuous(int d) { return {Kind::continuous, d}; }
};

// Plug-in concentration term chi = c * sqrt(log(max(N, T) / delta)).
inline double plugin_chi(std::size_t n_units, std::size_t n_times, double c, double delta) {
  const double big = static_cast<double>(std::max(n_units, n_times));
  return c * std::sqrt(std::log(big / delta));
}

// Threshold rules for the two factor regimes:
//   discrete:   eta = 2 sigma^2 + 2 chi / (p sqrt(n))
//   continuous: eta = 2 sigma^2 + chi / (p sqrt(n)) + c m^{-2/(d+4)}
// eta1 (unit distances, averaged over times) uses n = T and m = N; eta2
// swaps the roles.
inline Thresholds theory_eta(std::size_t n_units, std::size_t n_times, double p,
                             double sigma_sq, double c, double delta, Regime regime) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
  if (n_units < 2 || n_times < 2) throw ConfigError("need N, T >= 2");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(sigma_sq >= 0.0) || !(c >= 0.0)) throw ConfigError("sigma^2 and c must be >= 0");
  const double chi = plugin_chi(n_units, n_times, c, delta);
  const double n = static_cast<double>(n_units);
  const double t = static_cast<double>(n_times);
  const double err1 = chi / (p * std::sqrt(t));
  const double err2 = chi / (p * std::sqrt(n));
  if (regime.kind == Regime::Kind::discrete) {
    return {2.0 * sigma_sq + 2.0 * err1, 2.0 * sigma_sq + 2.0 * err2};
  }
  if (regime.d < 1) throw ConfigError("factor dimension must be positive");
  const double expo = -2.0 / (regime.d + 4.0);
  return {2.0 * sigma_sq + err1 + c * std::pow(n, expo),
          2.0 * sigma_sq + err2 + c * std::pow(t, expo)};
}

struct TuningResult {
  Thresholds best;
  double best_mse = 0.0;
  std::vector<Thresholds> grid;
  std::vector<double> mse;
};

// Deterministic argmin: lower MSE, then smaller eta1 + eta2, then
// lexicographic (eta1, eta2). Independent of grid order.
inline std::size_t pick_best(std::span<const Thresholds> grid, std::span<const double> mse) {
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const auto& a = grid[g];
    const auto& b = grid[best];
    const double sa = a.eta1 + a.eta2;
    const double sb = b.eta1 + b.eta2;
    if (mse[g] < mse[best] ||
        (mse[g] == mse[best] &&
         (sa < sb || (sa == sb && (a.eta1 < b.eta1 || (a.eta1 == b.eta1 && a.eta2 < b.eta2)))))) {
      best = g;
    }
  }
  return best;
}

inline TuningResult tuning_result(std::span<const Thresholds> grid, std::vector<double> mse) {
  TuningResult r;
  r.grid.assign(grid.begin(), grid.end());
  r.mse = std::move(mse);
  const auto k = pick_best(r.grid, r.mse);
  r.best = r.grid[k];
  r.best_mse = r.mse[k];
  return r;
}

struct ValidationOptions {
  HoldoutOptions holdout;
  EstimateOptions estimate;
};

inline TuningResult validation_tune(const ObservationPanel& panel,
                                    std::span<const Thresholds> grid, Method method,
                                    const ValidationOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  const auto plan = make_holdout(panel, opts.holdout);
  const Method methods[] = {method};
  auto mse = holdout_mse(plan, grid, methods, opts.estimate);
  return tuning_result(grid, std::move(mse[0]));
}

// Tunes several methods against one shared holdout.
inline std::vector<TuningResult> validation_tune_all(const ObservationPanel& panel,
                                                     std::span<const Thresholds> grid,
                                                     std::span<const Method> methods,
                                                     const ValidationOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  const auto plan = make_holdout(panel, opts.holdout);
  auto mse = holdout_mse(plan, grid, methods, opts.estimate);
  std::vector<TuningResult> out;
  for (auto& row : mse) out.push_back(tuning_result(grid, std::move(row)));
  return out;
}

// (base + o1, base + o2) for every pair of offsets, or only the diagonal.
inline std::vector<Thresholds> offset_grid(double base, std::span<const double> offsets,
                                           bool diagonal = true) {
  std::vector<Thresholds> grid;
  for (std::size_t a = 0; a < offsets.size(); ++a) {
    if (diagonal) {
      grid.push_back({std::max(0.0, base + offsets[a]), std::max(0.0, base + offsets[a])});
      continue;
    }
    for (std::size_t b = 0; b < offsets.size(); ++b) {
      grid.push_back({std::max(0.0, base + offsets[a]), std::max(0.0, base + offsets[b])});
    }
  }
  return grid;
}

}  // namespace drnn
