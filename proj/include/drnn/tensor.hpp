#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drnn/errors.hpp"
#include "drnn/neighbors.hpp"
#include "drnn/panel.hpp"
#include "drnn/random.hpp"

namespace drnn {

enum class TensorMode : int { unit = 0, time = 1, intervention = 2 };

struct TensorCell {
  std::size_t unit = 0;
  std::size_t time = 0;
  std::size_t intervention = 0;

  std::size_t coord(int mode) const {
    return mode == 0 ? unit : (mode == 1 ? time : intervention);
  }
  friend auto operator<=>(const TensorCell&, const TensorCell&) = default;
};

struct TensorThresholds {
  double eta1 = 0.0;
  double eta2 = 0.0;
  double eta3 = 0.0;

  double operator[](int mode) const { return mode == 0 ? eta1 : (mode == 1 ? eta2 : eta3); }
};

// Per mode: candidates come from half_1 of that mode, and distances are
// averaged over half_2 of the other two modes.
struct TensorSplit {
  std::array<IndexSet, 3> half_1;
  std::array<IndexSet, 3> half_2;
  std::uint64_t seed = 0;
};

struct TensorNeighborSets {
  TensorCell target;
  std::array<IndexSet, 3> neighbors;  // unit, time, intervention
  TensorThresholds etas;

  const IndexSet& unit_neighbors() const { return neighbors[0]; }
  const IndexSet& time_neighbors() const { return neighbors[1]; }
  const IndexSet& intervention_neighbors() const { return neighbors[2]; }
};

enum class TensorPath { tr_nn, single_mode, fallback_observed, fallback_global };

struct TensorEstimate {
  TensorCell target;
  TensorPath method = TensorPath::tr_nn;
  double value = 0.0;
  std::size_t n_terms = 0;
};

namespace detail {

inline void other_modes(int mode, int& b, int& c) {
  b = mode == 0 ? 1 : 0;
  c = mode == 2 ? 1 : 2;
}

// Mean squared difference of two mode-slices over the given coordinates of
// the other two modes (lists in mode order b < c).
inline double slice_distance(const ObservationTensor& x, int mode, std::size_t k1,
                             std::size_t k2, const IndexSet& coords_b,
                             const IndexSet& coords_c) {
  int mb = 0;
  int mc = 0;
  other_modes(mode, mb, mc);
  double num = 0.0;
  std::size_t overlap = 0;
  for (auto b : coords_b) {
    for (auto c : coords_c) {
      std::size_t idx1[3];
      std::size_t idx2[3];
      idx1[mode] = k1;
      idx2[mode] = k2;
      idx1[mb] = idx2[mb] = b;
      idx1[mc] = idx2[mc] = c;
      if (x.observed(idx1[0], idx1[1], idx1[2]) && x.observed(idx2[0], idx2[1], idx2[2])) {
        const double d = x.value(idx1[0], idx1[1], idx1[2]) - x.value(idx2[0], idx2[1], idx2[2]);
        num += d * d;
        ++overlap;
      }
    }
  }
  return overlap ? num / static_cast<double>(overlap) : kInf;
}

}  // namespace detail

// Mean squared difference between the mode-slices idx1 and idx2. With
// `exclude` = the target's coordinates in the other two modes (in mode
// order), every cell sharing either coordinate is left out.
inline double tensor_mode_distance(const ObservationTensor& x, TensorMode mode,
                                   std::size_t idx1, std::size_t idx2,
                                   std::optional<std::pair<std::size_t, std::size_t>> exclude) {
  if (idx1 == idx2) throw InvalidArgument("tensor_mode_distance needs distinct indices");
  const int m = static_cast<int>(mode);
  int mb = 0;
  int mc = 0;
  detail::other_modes(m, mb, mc);
  const auto nb = x.dim(mb);
  const auto nc = x.dim(mc);
  const auto coords_b = exclude ? all_except(nb, exclude->first) : all_except(nb, nb);
  const auto coords_c = exclude ? all_except(nc, exclude->second) : all_except(nc, nc);
  return detail::slice_distance(x, m, idx1, idx2, coords_b, coords_c);
}

inline TensorSplit make_tensor_split(const ObservationTensor& x, const TensorCell& target,
                                     std::uint64_t seed, SplitMode mode = SplitMode::bernoulli_half) {
  TensorSplit split;
  split.seed = seed;
  Rng rng = make_rng(derive_seed(seed, {tag64("tensor-split"), target.unit, target.time,
                                        target.intervention}));
  for (int k = 0; k < 3; ++k) {
    detail::split_indices(all_except(x.dim(k), target.coord(k)), mode, rng,
                          split.half_1[static_cast<std::size_t>(k)],
                          split.half_2[static_cast<std::size_t>(k)]);
  }
  return split;
}

// Inclusive per-mode thresholding. `seed` only drives the optional split.
inline TensorNeighborSets tensor_neighbors(const ObservationTensor& x, const TensorCell& target,
                                           const TensorThresholds& etas,
                                           std::optional<std::uint64_t> split_seed = std::nullopt) {
  for (int k = 0; k < 3; ++k) {
    if (target.coord(k) >= x.dim(k)) throw InvalidArgument("tensor target out of bounds");
    if (!(etas[k] >= 0.0)) throw InvalidArgument("thresholds must be nonnegative");
  }
  std::optional<TensorSplit> split;
  if (split_seed) split = make_tensor_split(x, target, *split_seed);
  TensorNeighborSets out;
  out.target = target;
  out.etas = etas;
  for (int m = 0; m < 3; ++m) {
    int mb = 0;
    int mc = 0;
    detail::other_modes(m, mb, mc);
    const auto ub = static_cast<std::size_t>(mb);
    const auto uc = static_cast<std::size_t>(mc);
    const auto um = static_cast<std::size_t>(m);
    const IndexSet candidates = split ? split->half_1[um] : all_except(x.dim(m), target.coord(m));
    const IndexSet coords_b = split ? split->half_2[ub] : all_except(x.dim(mb), target.coord(mb));
    const IndexSet coords_c = split ? split->half_2[uc] : all_except(x.dim(mc), target.coord(mc));
    for (auto k : candidates) {
      const double rho = detail::slice_distance(x, m, target.coord(m), k, coords_b, coords_c);
      if (rho != kInf && rho <= etas[m]) out.neighbors[um].push_back(k);
    }
  }
  return out;
}

namespace detail {

inline std::optional<TensorEstimate> tr_kernel(const ObservationTensor& x, const TensorCell& c,
                                               const IndexSet& units, const IndexSet& times,
                                               const IndexSet& arms) {
  const auto i = c.unit;
  const auto t = c.time;
  const auto a = c.intervention;
  double sum = 0.0;
  std::size_t n = 0;
  for (auto j : units) {
    if (!x.observed(j, t, a)) continue;
    const double y_jta = x.value(j, t, a);
    for (auto s : times) {
      if (!x.observed(i, s, a) || !x.observed(j, s, a)) continue;
      const double y_isa = x.value(i, s, a);
      const double y_jsa = x.value(j, s, a);
      for (auto b : arms) {
        if (!x.observed(i, t, b) || !x.observed(j, s, b) || !x.observed(j, t, b) ||
            !x.observed(i, s, b)) {
          continue;
        }
        sum += y_jta + y_isa + x.value(i, t, b) + x.value(j, s, b) - y_jsa - x.value(j, t, b) -
               x.value(i, s, b);
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return TensorEstimate{c, TensorPath::tr_nn, sum / static_cast<double>(n), n};
}

}  // namespace detail

// Seven-term inclusion-exclusion average over all (j, t', a') whose seven
// cells are observed. With nothing valid: the observed target value, else
// the empty sets widened to all indices, else every set widened.
inline TensorEstimate estimate_tr_nn(const ObservationTensor& x, const TensorNeighborSets& s) {
  const auto& c = s.target;
  if (auto e = detail::tr_kernel(x, c, s.neighbors[0], s.neighbors[1], s.neighbors[2])) return *e;
  if (x.observed(c.unit, c.time, c.intervention)) {
    return {c, TensorPath::fallback_observed, x.value(c.unit, c.time, c.intervention), 0};
  }
  std::array<IndexSet, 3> widened = s.neighbors;
  bool any_empty = false;
  for (int k = 0; k < 3; ++k) {
    auto& set = widened[static_cast<std::size_t>(k)];
    if (set.empty()) {
      set = all_except(x.dim(k), c.coord(k));
      any_empty = true;
    }
  }
  std::optional<TensorEstimate> e;
  if (any_empty) e = detail::tr_kernel(x, c, widened[0], widened[1], widened[2]);
  if (!e) {
    e = detail::tr_kernel(x, c, all_except(x.dim(0), c.unit), all_except(x.dim(1), c.time),
                          all_except(x.dim(2), c.intervention));
  }
  if (!e) throw NoDataError("no observed inclusion-exclusion pattern for the tensor target");
  e->method = TensorPath::fallback_global;
  return *e;
}

// Vanilla average along one mode's neighbors (e.g. unit-NN on the tensor).
inline TensorEstimate estimate_tensor_single_mode(const ObservationTensor& x,
                                                  const TensorNeighborSets& s, TensorMode mode) {
  const int m = static_cast<int>(mode);
  const auto& c = s.target;
  auto average = [&](const IndexSet& set) -> std::optional<TensorEstimate> {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto k : set) {
      std::size_t idx[3] = {c.unit, c.time, c.intervention};
      idx[m] = k;
      if (x.observed(idx[0], idx[1], idx[2])) {
        sum += x.value(idx[0], idx[1], idx[2]);
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return TensorEstimate{c, TensorPath::single_mode, sum / static_cast<double>(n), n};
  };
  if (auto e = average(s.neighbors[static_cast<std::size_t>(m)])) return *e;
  if (x.observed(c.unit, c.time, c.intervention)) {
    return {c, TensorPath::fallback_observed, x.value(c.unit, c.time, c.intervention), 0};
  }
  auto e = average(all_except(x.dim(m), c.coord(m)));
  if (!e) throw NoDataError("no observation along the requested tensor mode");
  e->method = TensorPath::fallback_global;
  return *e;
}

// Manifest: {"missing_token": "NA", "slices": ["a0.csv", ...]} with slice
// paths relative to the manifest, in intervention order. A bare JSON array
// of paths is accepted too.
inline ObservationTensor load_tensor_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  std::string token = "NA";
  nlohmann::json slices = j;
  if (j.is_object()) {
    token = j.value("missing_token", std::string("NA"));
    if (!j.contains("slices")) throw ParseError("manifest lacks a \"slices\" list");
    slices = j.at("slices");
  }
  if (!slices.is_array() || slices.empty()) throw ParseError("manifest needs a nonempty slice list");
  std::vector<ObservationPanel> panels;
  for (const auto& p : slices) {
    if (!p.is_string()) throw ParseError("slice entries must be paths");
    std::filesystem::path path = p.get<std::string>();
    if (path.is_relative()) path = manifest.parent_path() / path;
    panels.push_back(load_panel(path, token));
  }
  return ObservationTensor::from_slices(panels);
}

inline void save_tensor_manifest(const ObservationTensor& x, const std::filesystem::path& manifest,
                                 std::string_view missing_token = "NA") {
  nlohmann::json j;
  j["missing_token"] = std::string(missing_token);
  j["slices"] = nlohmann::json::array();
  const auto stem = manifest.stem().string();
  for (std::size_t a = 0; a < x.n_interventions(); ++a) {
    const auto name = stem + "_slice" + std::to_string(a) + ".csv";
    save_panel(x.slice(a), manifest.parent_path() / name, missing_token);
    j["slices"].push_back(name);
  }
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + manifest.string());
  out << j.dump(2) << '\n';
}

}  // namespace drnn
