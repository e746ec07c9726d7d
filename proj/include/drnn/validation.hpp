#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "drnn/errors.hpp"
#include "drnn/estimators.hpp"
#include "drnn/panel.hpp"
#include "drnn/random.hpp"

namespace drnn {

inline constexpr std::size_t kMinValidationObservations = 20;

// A seeded holdout of observed cells. Estimates are formed on `training`
// (the panel with every held-out cell masked) and scored on `eval_cells`.
struct HoldoutPlan {
  ObservationPanel training;
  std::vector<TargetCell> eval_cells;
  std::vector<double> held_values;
};

struct HoldoutOptions {
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  // Score only this many of the held-out cells (0 = all of them). Distances
  // cost O(NT) per cell, so large panels score a seeded subsample.
  std::size_t max_eval_cells = 0;
};

inline HoldoutPlan make_holdout(const ObservationPanel& panel, const HoldoutOptions& opts) {
  if (!(opts.holdout_fraction > 0.0)) {
    throw InsufficientData("holdout fraction must be positive");
  }
  if (opts.holdout_fraction > 0.5) {
    throw ConfigError("holdout fraction must be at most 1/2");
  }
  if (panel.observed_count() < kMinValidationObservations) {
    throw InsufficientData("validation needs at least 20 observed entries");
  }
  std::vector<TargetCell> observed;
  observed.reserve(panel.observed_count());
  for (std::size_t i = 0; i < panel.n_units(); ++i) {
    for (std::size_t t = 0; t < panel.n_times(); ++t) {
      if (panel.observed(i, t)) observed.push_back({i, t});
    }
  }
  Rng rng = make_rng(derive_seed(opts.seed, {tag64("holdout")}));
  std::shuffle(observed.begin(), observed.end(), rng);
  const auto n_hold = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(opts.holdout_fraction *
                                            static_cast<double>(observed.size()))));
  std::vector<TargetCell> hidden(observed.begin(),
                                 observed.begin() + static_cast<std::ptrdiff_t>(n_hold));
  HoldoutPlan plan;
  plan.training = panel.with_hidden(hidden);
  const auto n_eval = opts.max_eval_cells ? std::min(opts.max_eval_cells, n_hold) : n_hold;
  plan.eval_cells.assign(hidden.begin(), hidden.begin() + static_cast<std::ptrdiff_t>(n_eval));
  std::sort(plan.eval_cells.begin(), plan.eval_cells.end());
  for (const auto& c : plan.eval_cells) plan.held_values.push_back(panel.value(c.unit, c.time));
  return plan;
}

// Holdout MSE for every (method, grid point) pair; mse[m][g]. Distances are
// computed once per held-out cell and shared across the whole grid.
inline std::vector<std::vector<double>> holdout_mse(const HoldoutPlan& plan,
                                                    std::span<const Thresholds> grid,
                                                    std::span<const Method> methods,
                                                    const EstimateOptions& opts = {}) {
  std::vector<std::vector<double>> sse(methods.size(), std::vector<double>(grid.size(), 0.0));
  for (std::size_t k = 0; k < plan.eval_cells.size(); ++k) {
    const auto& cell = plan.eval_cells[k];
    const auto candidates =
        neighbor_candidates(plan.training, cell, split_for(plan.training, cell, opts));
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t g = 0; g < grid.size(); ++g) {
        double err = 0.0;
        try {
          const auto e = estimate_from_candidates(plan.training, candidates, grid[g],
                                                  methods[m], opts);
          err = e.value - plan.held_values[k];
          err *= err;
        } catch (const NoDataError&) {
          err = kInf;
        }
        sse[m][g] += err;
      }
    }
  }
  const double n = static_cast<double>(plan.eval_cells.size());
  for (auto& row : sse) {
    for (auto& v : row) v /= n;
  }
  return sse;
}

}  // namespace drnn
