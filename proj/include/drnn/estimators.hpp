#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drnn/errors.hpp"
#include "drnn/neighbors.hpp"
#include "drnn/panel.hpp"
#include "drnn/parallel.hpp"
#include "drnn/random.hpp"

namespace drnn {

enum class Method { unit, time, dr };

// Which formula actually produced an estimate.
enum class EstimatePath { unit_nn, time_nn, dr_nn, fallback_observed, fallback_global };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::unit: return "unit";
    case Method::time: return "time";
    case Method::dr: return "dr";
  }
  return "?";
}

inline std::string_view to_string(EstimatePath p) {
  switch (p) {
    case EstimatePath::unit_nn: return "unit_nn";
    case EstimatePath::time_nn: return "time_nn";
    case EstimatePath::dr_nn: return "dr_nn";
    case EstimatePath::fallback_observed: return "fallback_observed";
    case EstimatePath::fallback_global: return "fallback_global";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "unit" || s == "unit_nn") return Method::unit;
  if (s == "time" || s == "time_nn") return Method::time;
  if (s == "dr" || s == "dr_nn") return Method::dr;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

struct Thresholds {
  double eta1 = 0.0;
  double eta2 = 0.0;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

// Point estimate plus the three denominators:
//   n_time_used  = sum_{t' in S_time} A[i,t']
//   n_unit_used  = sum_{j in S_unit} A[j,t]
//   n_cross_terms = sum_{j,t'} A[i,t'] A[j,t] A[j,t']
// Estimators that do not use a denominator leave it at zero.
struct EntryEstimate {
  TargetCell target;
  EstimatePath method = EstimatePath::dr_nn;
  double value = 0.0;
  std::size_t n_unit_used = 0;
  std::size_t n_time_used = 0;
  std::size_t n_cross_terms = 0;
  Thresholds eta;
};

namespace detail {

inline std::optional<EntryEstimate> unit_kernel(const ObservationPanel& panel,
                                                const TargetCell& c,
                                                const IndexSet& units) {
  double sum = 0.0;
  std::size_t n = 0;
  for (auto j : units) {
    if (panel.observed(j, c.time)) {
      sum += panel.value(j, c.time);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  EntryEstimate e;
  e.target = c;
  e.method = EstimatePath::unit_nn;
  e.value = sum / static_cast<double>(n);
  e.n_unit_used = n;
  return e;
}

inline std::optional<EntryEstimate> time_kernel(const ObservationPanel& panel,
                                                const TargetCell& c,
                                                const IndexSet& times) {
  const auto a = panel.mask_row(c.unit);
  const auto y = panel.outcome_row(c.unit);
  double sum = 0.0;
  std::size_t n = 0;
  for (auto s : times) {
    if (a[s]) {
      sum += y[s];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  EntryEstimate e;
  e.target = c;
  e.method = EstimatePath::time_nn;
  e.value = sum / static_cast<double>(n);
  e.n_time_used = n;
  return e;
}

struct DrSums {
  double sum = 0.0;
  std::size_t n_unit = 0;
  std::size_t n_time = 0;
  std::size_t n_cross = 0;
};

inline DrSums dr_sums(const ObservationPanel& panel, const TargetCell& c,
                      const IndexSet& units, const IndexSet& times) {
  DrSums out;
  const auto ai = panel.mask_row(c.unit);
  const auto yi = panel.outcome_row(c.unit);
  // Times where the target row is observed; only these can contribute.
  std::vector<std::size_t> live;
  live.reserve(times.size());
  for (auto s : times) {
    if (ai[s]) live.push_back(s);
  }
  out.n_time = live.size();
  for (auto j : units) {
    const auto aj = panel.mask_row(j);
    if (!aj[c.time]) continue;
    ++out.n_unit;
    const auto yj = panel.outcome_row(j);
    const double yjt = yj[c.time];
    for (auto s : live) {
      if (aj[s]) {
        out.sum += yi[s] + yjt - yj[s];
        ++out.n_cross;
      }
    }
  }
  return out;
}

inline std::optional<EntryEstimate> dr_kernel(const ObservationPanel& panel,
                                              const TargetCell& c,
                                              const IndexSet& units,
                                              const IndexSet& times) {
  const auto s = dr_sums(panel, c, units, times);
  if (s.n_cross == 0) return std::nullopt;
  EntryEstimate e;
  e.target = c;
  e.method = EstimatePath::dr_nn;
  e.value = s.sum / static_cast<double>(s.n_cross);
  e.n_unit_used = s.n_unit;
  e.n_time_used = s.n_time;
  e.n_cross_terms = s.n_cross;
  return e;
}

// No-neighbor ladder: the observed outcome if there is one, otherwise the
// same formula with the empty neighbor set(s) widened to every unit/time.
// For DR-NN only the side(s) with a zero count are widened first; if the
// cross product is still empty both sides are widened.
inline EntryEstimate fallback(const ObservationPanel& panel, const NeighborSets& s,
                              Method method) {
  const auto& c = s.target;
  if (panel.observed(c.unit, c.time)) {
    EntryEstimate e;
    e.target = c;
    e.method = EstimatePath::fallback_observed;
    e.value = panel.value(c.unit, c.time);
    e.eta = {s.eta1, s.eta2};
    return e;
  }
  const auto all_units = all_except(panel.n_units(), c.unit);
  const auto all_times = all_except(panel.n_times(), c.time);
  std::optional<EntryEstimate> e;
  switch (method) {
    case Method::unit:
      e = unit_kernel(panel, c, all_units);
      break;
    case Method::time:
      e = time_kernel(panel, c, all_times);
      break;
    case Method::dr: {
      const auto sums = dr_sums(panel, c, s.unit_neighbors, s.time_neighbors);
      const bool widen_units = sums.n_unit == 0;
      const bool widen_times = sums.n_time == 0;
      if (widen_units || widen_times) {
        e = dr_kernel(panel, c, widen_units ? all_units : s.unit_neighbors,
                      widen_times ? all_times : s.time_neighbors);
      }
      if (!e) e = dr_kernel(panel, c, all_units, all_times);
      break;
    }
  }
  if (!e) {
    throw NoDataError("no observation supports an estimate at (" +
                      std::to_string(c.unit) + "," + std::to_string(c.time) + ")");
  }
  e->method = EstimatePath::fallback_global;
  e->eta = {s.eta1, s.eta2};
  return *e;
}

}  // namespace detail

inline EntryEstimate estimate_unit_nn(const ObservationPanel& panel,
                                      const NeighborSets& s) {
  auto e = detail::unit_kernel(panel, s.target, s.unit_neighbors);
  if (!e) return detail::fallback(panel, s, Method::unit);
  e->eta = {s.eta1, s.eta2};
  return *e;
}

inline EntryEstimate estimate_time_nn(const ObservationPanel& panel,
                                      const NeighborSets& s) {
  auto e = detail::time_kernel(panel, s.target, s.time_neighbors);
  if (!e) return detail::fallback(panel, s, Method::time);
  e->eta = {s.eta1, s.eta2};
  return *e;
}

inline EntryEstimate estimate_dr_nn(const ObservationPanel& panel,
                                    const NeighborSets& s) {
  auto e = detail::dr_kernel(panel, s.target, s.unit_neighbors, s.time_neighbors);
  if (!e) return detail::fallback(panel, s, Method::dr);
  e->eta = {s.eta1, s.eta2};
  return *e;
}

inline EntryEstimate estimate_with(const ObservationPanel& panel,
                                   const NeighborSets& s, Method method) {
  switch (method) {
    case Method::unit: return estimate_unit_nn(panel, s);
    case Method::time: return estimate_time_nn(panel, s);
    case Method::dr: return estimate_dr_nn(panel, s);
  }
  throw InvalidArgument("unknown method");
}

struct EstimateOptions {
  // Enables the 2x2 sample split; each cell derives its own split from it.
  std::optional<std::uint64_t> split_seed;
  SplitMode split_mode = SplitMode::bernoulli_half;
  // Uniform subsample (without replacement) of each neighbor set.
  std::optional<std::size_t> max_neighbors;
};

// Keeps at most `cap` elements chosen uniformly without replacement.
inline void subsample(IndexSet& set, std::size_t cap, Rng& rng) {
  if (set.size() <= cap) return;
  for (std::size_t k = 0; k < cap; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, set.size() - 1);
    std::swap(set[k], set[pick(rng)]);
  }
  set.resize(cap);
  std::sort(set.begin(), set.end());
}

inline void cap_neighbors(NeighborSets& s, std::size_t cap, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, {tag64("subsample"), s.target.unit, s.target.time}));
  subsample(s.unit_neighbors, cap, rng);
  subsample(s.time_neighbors, cap, rng);
}

inline EntryEstimate estimate_from_candidates(const ObservationPanel& panel,
                                              const NeighborCandidates& c,
                                              Thresholds eta, Method method,
                                              const EstimateOptions& opts = {}) {
  auto sets = apply_thresholds(c, eta.eta1, eta.eta2);
  if (opts.max_neighbors) {
    cap_neighbors(sets, *opts.max_neighbors, opts.split_seed.value_or(0));
  }
  return estimate_with(panel, sets, method);
}

inline std::optional<SplitAssignment> split_for(const ObservationPanel& panel,
                                                const TargetCell& target,
                                                const EstimateOptions& opts) {
  if (!opts.split_seed) return std::nullopt;
  return make_split(panel.n_units(), panel.n_times(), target, *opts.split_seed,
                    opts.split_mode);
}

inline EntryEstimate estimate_entry(const ObservationPanel& panel,
                                    const TargetCell& target, Thresholds eta,
                                    Method method, const EstimateOptions& opts = {}) {
  if (panel.observed_count() == 0) throw NoDataError("panel has no observed entries");
  if (!(eta.eta1 >= 0.0) || !(eta.eta2 >= 0.0)) {
    throw InvalidArgument("thresholds must be nonnegative");
  }
  const auto candidates = neighbor_candidates(panel, target, split_for(panel, target, opts));
  return estimate_from_candidates(panel, candidates, eta, method, opts);
}

inline std::vector<TargetCell> all_cells(std::size_t n_units, std::size_t n_times) {
  std::vector<TargetCell> cells;
  cells.reserve(n_units * n_times);
  for (std::size_t i = 0; i < n_units; ++i) {
    for (std::size_t t = 0; t < n_times; ++t) cells.push_back({i, t});
  }
  return cells;
}

// One estimate per requested cell (default: every cell, row-major), in the
// order requested.
inline std::vector<EntryEstimate> complete_matrix(
    const ObservationPanel& panel, Thresholds eta, Method method,
    const EstimateOptions& opts = {},
    std::optional<std::vector<TargetCell>> targets = std::nullopt,
    std::size_t workers = 1) {
  if (panel.observed_count() == 0) throw NoDataError("panel has no observed entries");
  const auto cells = targets ? std::move(*targets) : all_cells(panel.n_units(), panel.n_times());
  for (const auto& c : cells) {
    if (!panel.contains(c)) throw InvalidArgument("target cell out of bounds");
  }
  std::vector<EntryEstimate> out(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t k) {
    out[k] = estimate_entry(panel, cells[k], eta, method, opts);
  });
  return out;
}

struct CompletionSide {
  std::vector<EntryEstimate> estimates;
  std::optional<std::string> error;

  bool ok() const noexcept { return !error.has_value(); }
};

// Two-mask mode: the treated and control potential-outcome surfaces are
// completed as two separate problems. Returns (control, treated).
inline std::pair<CompletionSide, CompletionSide> counterfactual_estimates(
    const RealMatrix& outcomes, const MaskMatrix& treatment, Thresholds eta,
    Method method, const EstimateOptions& opts = {}, std::size_t workers = 1) {
  if (outcomes.rows() != treatment.rows() || outcomes.cols() != treatment.cols()) {
    throw InvalidArgument("outcomes and treatment dimensions differ");
  }
  auto side = [&](bool treated) {
    MaskMatrix mask(treatment.rows(), treatment.cols(), 0);
    auto src = treatment.flat();
    auto dst = mask.flat();
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] = static_cast<std::uint8_t>((src[k] != 0) == treated ? 1 : 0);
    }
    CompletionSide out;
    try {
      ObservationPanel panel(outcomes, std::move(mask));
      out.estimates = complete_matrix(panel, eta, method, opts, std::nullopt, workers);
    } catch (const NoDataError& e) {
      out.error = e.what();
    }
    return out;
  };
  return {side(false), side(true)};
}

}  // namespace drnn
