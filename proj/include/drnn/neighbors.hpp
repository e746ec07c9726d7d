#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "drnn/errors.hpp"
#include "drnn/panel.hpp"
#include "drnn/random.hpp"

namespace drnn {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using IndexSet = std::vector<std::size_t>;
using DistanceMap = std::map<std::size_t, double>;

enum class SplitMode { bernoulli_half, exact_half };

// Random 2x2 partition of the non-target rows and columns. Unit distances
// are computed on times in time_half_1 over candidate units in unit_half_1;
// time distances on units in unit_half_2 over candidate times in time_half_2.
struct SplitAssignment {
  IndexSet time_half_1;
  IndexSet time_half_2;
  IndexSet unit_half_1;
  IndexSet unit_half_2;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::bernoulli_half;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

struct NeighborSets {
  TargetCell target;
  IndexSet unit_neighbors;
  IndexSet time_neighbors;
  double eta1 = 0.0;
  double eta2 = 0.0;
  std::optional<SplitAssignment> split;
  DistanceMap unit_distances;
  DistanceMap time_distances;
};

// Distances to every candidate, before thresholding. Validation reuses one
// of these across a whole grid of thresholds.
struct NeighborCandidates {
  TargetCell target;
  std::optional<SplitAssignment> split;
  DistanceMap unit_distances;
  DistanceMap time_distances;
};

inline IndexSet all_except(std::size_t n, std::size_t skip) {
  IndexSet out;
  out.reserve(n > 0 ? n - 1 : 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (k != skip) out.push_back(k);
  }
  return out;
}

// Mean squared difference between rows i and j over the candidate times
// where both are observed; +inf when they never overlap.
inline double unit_distance(const ObservationPanel& panel, std::size_t i,
                            std::size_t j, std::size_t exclude_time,
                            std::span<const std::size_t> candidate_times) {
  if (i == j) throw InvalidArgument("unit_distance needs two distinct units");
  if (std::find(candidate_times.begin(), candidate_times.end(), exclude_time) !=
      candidate_times.end()) {
    throw InvalidArgument("excluded time is among the candidate times");
  }
  const auto yi = panel.outcome_row(i);
  const auto yj = panel.outcome_row(j);
  const auto ai = panel.mask_row(i);
  const auto aj = panel.mask_row(j);
  double num = 0.0;
  std::size_t overlap = 0;
  for (auto s : candidate_times) {
    if (ai[s] && aj[s]) {
      const double d = yi[s] - yj[s];
      num += d * d;
      ++overlap;
    }
  }
  return overlap ? num / static_cast<double>(overlap) : kInf;
}

inline double time_distance(const ObservationPanel& panel, std::size_t t,
                            std::size_t t2, std::size_t exclude_unit,
                            std::span<const std::size_t> candidate_units) {
  if (t == t2) throw InvalidArgument("time_distance needs two distinct times");
  if (std::find(candidate_units.begin(), candidate_units.end(), exclude_unit) !=
      candidate_units.end()) {
    throw InvalidArgument("excluded unit is among the candidate units");
  }
  double num = 0.0;
  std::size_t overlap = 0;
  for (auto j : candidate_units) {
    if (panel.observed(j, t) && panel.observed(j, t2)) {
      const auto y = panel.outcome_row(j);
      const double d = y[t] - y[t2];
      num += d * d;
      ++overlap;
    }
  }
  return overlap ? num / static_cast<double>(overlap) : kInf;
}

inline DistanceMap all_unit_distances(const ObservationPanel& panel,
                                      std::size_t i, std::size_t exclude_time,
                                      std::span<const std::size_t> candidate_units,
                                      std::span<const std::size_t> candidate_times) {
  DistanceMap out;
  for (auto j : candidate_units) {
    out.emplace(j, unit_distance(panel, i, j, exclude_time, candidate_times));
  }
  return out;
}

// Row-major sweep: one pass over each candidate unit accumulates all the
// per-time sums. Each pair still sums in candidate_units order, matching
// time_distance bit for bit.
inline DistanceMap all_time_distances(const ObservationPanel& panel,
                                      std::size_t t, std::size_t exclude_unit,
                                      std::span<const std::size_t> candidate_times,
                                      std::span<const std::size_t> candidate_units) {
  for (auto s : candidate_times) {
    if (s == t) throw InvalidArgument("time_distance needs two distinct times");
  }
  if (std::find(candidate_units.begin(), candidate_units.end(), exclude_unit) !=
      candidate_units.end()) {
    throw InvalidArgument("excluded unit is among the candidate units");
  }
  std::vector<double> num(candidate_times.size(), 0.0);
  std::vector<std::size_t> overlap(candidate_times.size(), 0);
  for (auto j : candidate_units) {
    const auto a = panel.mask_row(j);
    if (!a[t]) continue;
    const auto y = panel.outcome_row(j);
    const double yt = y[t];
    for (std::size_t k = 0; k < candidate_times.size(); ++k) {
      const auto s = candidate_times[k];
      if (a[s]) {
        const double d = yt - y[s];
        num[k] += d * d;
        ++overlap[k];
      }
    }
  }
  DistanceMap out;
  for (std::size_t k = 0; k < candidate_times.size(); ++k) {
    out.emplace(candidate_times[k],
                overlap[k] ? num[k] / static_cast<double>(overlap[k]) : kInf);
  }
  return out;
}

namespace detail {

inline void split_indices(const IndexSet& pool, SplitMode mode, Rng& rng,
                          IndexSet& first, IndexSet& second) {
  first.clear();
  second.clear();
  if (mode == SplitMode::bernoulli_half) {
    std::bernoulli_distribution coin(0.5);
    for (auto k : pool) (coin(rng) ? first : second).push_back(k);
    return;
  }
  IndexSet shuffled = pool;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::size_t take = shuffled.size() / 2;
  if (shuffled.size() % 2 == 1 && std::bernoulli_distribution(0.5)(rng)) ++take;
  first.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(take));
  second.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(take), shuffled.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
}

}  // namespace detail

// The stream is keyed on (seed, target), so each cell gets its own split.
inline SplitAssignment make_split(std::size_t n_units, std::size_t n_times,
                                  const TargetCell& target, std::uint64_t seed,
                                  SplitMode mode = SplitMode::bernoulli_half) {
  SplitAssignment split;
  split.seed = seed;
  split.mode = mode;
  Rng rng = make_rng(derive_seed(seed, {tag64("split"), target.unit, target.time}));
  detail::split_indices(all_except(n_times, target.time), mode, rng,
                        split.time_half_1, split.time_half_2);
  detail::split_indices(all_except(n_units, target.unit), mode, rng,
                        split.unit_half_1, split.unit_half_2);
  return split;
}

inline NeighborCandidates neighbor_candidates(
    const ObservationPanel& panel, const TargetCell& target,
    const std::optional<SplitAssignment>& split = std::nullopt) {
  if (!panel.contains(target)) throw InvalidArgument("target cell out of bounds");
  NeighborCandidates c;
  c.target = target;
  c.split = split;
  if (split) {
    c.unit_distances = all_unit_distances(panel, target.unit, target.time,
                                          split->unit_half_1, split->time_half_1);
    c.time_distances = all_time_distances(panel, target.time, target.unit,
                                          split->time_half_2, split->unit_half_2);
  } else {
    const auto units = all_except(panel.n_units(), target.unit);
    const auto times = all_except(panel.n_times(), target.time);
    c.unit_distances = all_unit_distances(panel, target.unit, target.time, units, times);
    c.time_distances = all_time_distances(panel, target.time, target.unit, times, units);
  }
  return c;
}

// Inclusive threshold: rho <= eta qualifies, +inf never does.
inline IndexSet threshold_set(const DistanceMap& distances, double eta) {
  IndexSet out;
  for (const auto& [k, rho] : distances) {
    if (rho != kInf && rho <= eta) out.push_back(k);
  }
  return out;
}

inline NeighborSets apply_thresholds(const NeighborCandidates& c, double eta1,
                                     double eta2) {
  if (!(eta1 >= 0.0) || !(eta2 >= 0.0)) {
    throw InvalidArgument("thresholds must be nonnegative");
  }
  NeighborSets s;
  s.target = c.target;
  s.eta1 = eta1;
  s.eta2 = eta2;
  s.split = c.split;
  s.unit_neighbors = threshold_set(c.unit_distances, eta1);
  s.time_neighbors = threshold_set(c.time_distances, eta2);
  s.unit_distances = c.unit_distances;
  s.time_distances = c.time_distances;
  return s;
}

inline NeighborSets select_neighbors(
    const ObservationPanel& panel, const TargetCell& target, double eta1,
    double eta2, const std::optional<SplitAssignment>& split = std::nullopt) {
  return apply_thresholds(neighbor_candidates(panel, target, split), eta1, eta2);
}

inline nlohmann::json to_json(const NeighborSets& s) {
  auto distances = [](const DistanceMap& m) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, rho] : m) {
      out[std::to_string(k)] = rho == kInf ? nlohmann::json(nullptr) : nlohmann::json(rho);
    }
    return out;
  };
  nlohmann::json j{{"unit", s.target.unit},
                   {"time", s.target.time},
                   {"eta1", s.eta1},
                   {"eta2", s.eta2},
                   {"unit_neighbors", s.unit_neighbors},
                   {"time_neighbors", s.time_neighbors},
                   {"unit_distances", distances(s.unit_distances)},
                   {"time_distances", distances(s.time_distances)}};
  if (s.split) {
    j["split"] = {{"seed", s.split->seed},
                  {"mode", s.split->mode == SplitMode::bernoulli_half ? "bernoulli_half"
                                                                     : "exact_half"},
                  {"time_half_1", s.split->time_half_1},
                  {"time_half_2", s.split->time_half_2},
                  {"unit_half_1", s.split->unit_half_1},
                  {"unit_half_2", s.split->unit_half_2}};
  } else {
    j["split"] = nullptr;
  }
  return j;
}

}  // namespace drnn
