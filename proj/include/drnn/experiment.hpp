#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drnn/errors.hpp"
#include "drnn/estimators.hpp"
#include "drnn/inference.hpp"
#include "drnn/parallel.hpp"
#include "drnn/random.hpp"
#include "drnn/synthetic.hpp"
#include "drnn/tensor.hpp"
#include "drnn/tuning.hpp"

namespace drnn {

enum class Scenario { rate_sweep, robustness, improvement, coverage, tensor_demo };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::rate_sweep: return "rate_sweep";
    case Scenario::robustness: return "robustness";
    case Scenario::improvement: return "improvement";
    case Scenario::coverage: return "coverage";
    case Scenario::tensor_demo: return "tensor_demo";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "rate_sweep") return Scenario::rate_sweep;
  if (s == "robustness") return Scenario::robustness;
  if (s == "improvement") return Scenario::improvement;
  if (s == "coverage") return Scenario::coverage;
  if (s == "tensor_demo") return Scenario::tensor_demo;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

struct TuningRule {
  enum class Mode { theory_discrete, theory_continuous, validation } mode = Mode::validation;
  // Known noise variance; when absent the harness estimates it.
  std::optional<double> sigma_sq;
  double plugin_constant = 1.0;
  double delta = 0.05;
  // Explicit grid; when empty the grid is 2 sigma^2 + offsets.
  std::vector<Thresholds> grid;
  std::vector<double> offsets = {-0.05, 0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2};
  bool diagonal = true;
  double holdout_fraction = 0.2;
  std::size_t max_eval_cells = 60;
};

inline TuningRule::Mode parse_tuning_mode(std::string_view s) {
  if (s == "theory_discrete") return TuningRule::Mode::theory_discrete;
  if (s == "theory_continuous") return TuningRule::Mode::theory_continuous;
  if (s == "validation") return TuningRule::Mode::validation;
  throw ConfigError("unknown tuning mode '" + std::string(s) + "'");
}

enum class SigmaSource { known, estimated };

struct NeighborCap {
  enum class Kind { none, sqrt, fixed } kind = Kind::none;
  std::size_t fixed = 0;

  std::size_t cap_for(std::size_t available) const {
    switch (kind) {
      case Kind::none: return available;
      case Kind::sqrt:
        return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(available))));
      case Kind::fixed: return std::min(fixed, available);
    }
    return available;
  }
};

struct ExperimentConfig {
  Scenario scenario = Scenario::rate_sweep;
  std::vector<std::pair<std::size_t, std::size_t>> sizes = {{100, 100}};
  std::size_t replications = 10;
  InstanceConfig generator;
  // Tensor scenario: intervention-mode length (0 = same as N), factors.
  std::size_t tensor_interventions = 0;
  std::vector<std::string> methods = {"unit", "time", "dr"};
  TuningRule tuning;
  std::optional<double> alpha;  // CI level; coverage always sets one
  SigmaSource sigma_source = SigmaSource::known;
  NeighborCap neighbor_cap;
  std::optional<SplitMode> split;
  std::optional<std::size_t> target_unit;
  std::uint64_t base_seed = 0;
  std::string output_path;
  std::size_t workers = 1;
  bool record_timing = false;
};

// Ground-truth comparison for one (replication, method).
struct ResultRow {
  std::string scenario;
  std::size_t n_units = 0;
  std::size_t n_times = 0;
  double p = 1.0;
  double sigma = 0.0;
  std::string method;
  std::size_t replication = 0;
  std::size_t target_i = 0;
  std::size_t target_t = 0;
  double sq_error = 0.0;
  std::optional<bool> ci_covered;
  std::optional<double> ci_width;
  std::size_t n_unit = 0;
  std::size_t n_time = 0;
  double eta1 = 0.0;
  double eta2 = 0.0;
  double wall_ms = 0.0;
  std::string status = "ok";

  bool failed() const { return status.rfind("error", 0) == 0; }
};

inline const char* kResultHeader =
    "scenario,N,T,p,sigma,method,replication,target_i,target_t,sq_error,ci_covered,"
    "ci_width,n_unit,n_time,eta1,eta2,wall_ms,status";

inline std::uint64_t replication_seed(std::uint64_t base, std::size_t n, std::size_t t,
                                      std::size_t rep, std::string_view tag = "instance") {
  return derive_seed(base, {n, t, rep, tag64(tag)});
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

inline std::vector<Thresholds> tuning_grid(const TuningRule& rule, double sigma_sq) {
  if (!rule.grid.empty()) return rule.grid;
  if (rule.offsets.empty()) throw ConfigError("tuning needs a grid or offsets");
  return offset_grid(2.0 * sigma_sq, rule.offsets, rule.diagonal);
}

inline ResultRow base_row(const ExperimentConfig& cfg, std::size_t n, std::size_t t,
                          std::size_t rep, std::string_view method) {
  ResultRow r;
  r.scenario = std::string(to_string(cfg.scenario));
  r.n_units = n;
  r.n_times = t;
  r.p = cfg.generator.p;
  r.sigma = cfg.generator.sigma;
  r.method = std::string(method);
  r.replication = rep;
  return r;
}

inline std::vector<ResultRow> run_tensor_replication(const ExperimentConfig& cfg, std::size_t n,
                                                     std::size_t t, std::size_t rep) {
  const auto seed = replication_seed(cfg.base_seed, n, t, rep);
  TensorInstanceConfig tc;
  tc.dims[0] = n;
  tc.dims[1] = t;
  tc.dims[2] = cfg.tensor_interventions ? cfg.tensor_interventions : n;
  tc.kind = cfg.generator.factor.unit_kind;
  tc.d = cfg.generator.factor.d;
  tc.m = cfg.generator.factor.m_unit;
  tc.c = cfg.generator.factor.c;
  tc.sigma = cfg.generator.sigma;
  tc.noise_kind = cfg.generator.noise_kind;
  tc.noise_bound = cfg.generator.noise_bound;
  tc.p = cfg.generator.p;
  tc.seed = seed;
  const auto inst = gen_tensor_instance(tc);
  Rng rng = make_rng(derive_seed(seed, {tag64("target")}));
  TensorCell cell{std::uniform_int_distribution<std::size_t>(0, tc.dims[0] - 1)(rng),
                  std::uniform_int_distribution<std::size_t>(0, tc.dims[1] - 1)(rng),
                  std::uniform_int_distribution<std::size_t>(0, tc.dims[2] - 1)(rng)};
  // Per-mode plug-in threshold: each slab distance averages over the
  // (dim_b - 1)(dim_c - 1) cells of the other two modes.
  const double sigma_sq = cfg.tuning.sigma_sq.value_or(tc.sigma * tc.sigma);
  const double big = static_cast<double>(std::max({tc.dims[0], tc.dims[1], tc.dims[2]}));
  const double chi = cfg.tuning.plugin_constant * std::sqrt(std::log(big / cfg.tuning.delta));
  double eta[3];
  for (int m = 0; m < 3; ++m) {
    int b = 0;
    int c = 0;
    other_modes(m, b, c);
    const double slab = static_cast<double>((tc.dims[b] - 1) * (tc.dims[c] - 1));
    eta[m] = 2.0 * sigma_sq + 2.0 * chi / (tc.p * std::sqrt(std::max(1.0, slab)));
  }
  std::optional<std::uint64_t> split_seed;
  if (cfg.split) split_seed = derive_seed(seed, {tag64("split")});
  std::vector<ResultRow> rows;
  const auto start = std::chrono::steady_clock::now();
  const auto x = inst.tensor.with_hidden(cell.unit, cell.time, cell.intervention);
  const auto sets = tensor_neighbors(x, cell, {eta[0], eta[1], eta[2]}, split_seed);
  for (const auto& method : cfg.methods) {
    auto row = base_row(cfg, n, t, rep, method);
    row.target_i = cell.unit;
    row.target_t = cell.time;
    row.eta1 = eta[0];
    row.eta2 = eta[1];
    row.n_unit = sets.neighbors[0].size();
    row.n_time = sets.neighbors[1].size();
    try {
      TensorEstimate e;
      if (method == "tr") {
        e = estimate_tr_nn(x, sets);
      } else if (method == "unit") {
        e = estimate_tensor_single_mode(x, sets, TensorMode::unit);
      } else if (method == "time") {
        e = estimate_tensor_single_mode(x, sets, TensorMode::time);
      } else if (method == "intervention") {
        e = estimate_tensor_single_mode(x, sets, TensorMode::intervention);
      } else {
        throw ConfigError("tensor scenario does not support method '" + method + "'");
      }
      const double err = e.value - inst.truth(cell.unit, cell.time, cell.intervention);
      row.sq_error = err * err;
      row.status = e.method == TensorPath::fallback_global     ? "fallback_global"
                   : e.method == TensorPath::fallback_observed ? "fallback_observed"
                                                               : "ok";
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      row.sq_error = std::nan("");
      row.status = std::string("error: ") + e.what();
    }
    if (cfg.record_timing) row.wall_ms = elapsed_ms(start);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// One seeded instance, one target cell, every configured method.
inline std::vector<ResultRow> run_replication(const ExperimentConfig& cfg,
                                              std::pair<std::size_t, std::size_t> size,
                                              std::size_t rep) {
  const auto [n, t] = size;
  if (cfg.methods.empty()) return {};
  if (cfg.scenario == Scenario::tensor_demo) return detail::run_tensor_replication(cfg, n, t, rep);

  std::vector<Method> methods;
  for (const auto& m : cfg.methods) methods.push_back(parse_method(m));

  const auto seed = replication_seed(cfg.base_seed, n, t, rep);
  std::vector<ResultRow> rows;
  auto fail_all = [&](const std::string& what) {
    rows.clear();
    for (const auto& m : cfg.methods) {
      auto row = detail::base_row(cfg, n, t, rep, m);
      row.sq_error = std::nan("");
      row.status = "error: " + what;
      rows.push_back(std::move(row));
    }
    return rows;
  };

  const auto start = std::chrono::steady_clock::now();
  SyntheticInstance inst;
  try {
    auto gen = cfg.generator;
    gen.n_units = n;
    gen.n_times = t;
    gen.seed = seed;
    inst = gen_instance(gen);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    return fail_all(e.what());
  }

  Rng rng = make_rng(derive_seed(seed, {tag64("target")}));
  TargetCell target;
  target.unit = cfg.target_unit ? *cfg.target_unit
                                : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  target.time = std::uniform_int_distribution<std::size_t>(0, t - 1)(rng);
  if (target.unit >= n) throw ConfigError("target_unit out of range");
  // The target is always treated as a missing cell.
  const TargetCell hidden[] = {target};
  const auto panel = inst.panel.with_hidden(hidden);
  const double truth = inst.theta(target.unit, target.time);
  const double p_hat = mask_density(panel);

  EstimateOptions est_opts;
  if (cfg.split) {
    est_opts.split_seed = derive_seed(seed, {tag64("split")});
    est_opts.split_mode = *cfg.split;
  }

  double sigma_sq = 0.0;
  std::vector<Thresholds> eta(methods.size());
  try {
    const auto& rule = cfg.tuning;
    if (cfg.sigma_source == SigmaSource::known) {
      sigma_sq = rule.sigma_sq.value_or(cfg.generator.sigma * cfg.generator.sigma);
    } else {
      // Holdout MSE of DR-NN over a grid built from the distance-based
      // sigma^2 proxy.
      NoiseVarianceOptions nv;
      nv.holdout = {rule.holdout_fraction, derive_seed(seed, {tag64("sigma-holdout")}),
                    rule.max_eval_cells};
      nv.estimate = est_opts;
      const double proxy = noise_variance_from_distances(panel, 50, seed);
      const auto grid = detail::tuning_grid(rule, proxy);
      sigma_sq = estimate_noise_variance(panel, grid, Method::dr, nv);
    }
    if (rule.mode == TuningRule::Mode::validation) {
      ValidationOptions vo;
      vo.holdout = {rule.holdout_fraction, derive_seed(seed, {tag64("holdout")}),
                    rule.max_eval_cells};
      vo.estimate = est_opts;
      const auto grid = detail::tuning_grid(rule, sigma_sq);
      const auto tuned = validation_tune_all(panel, grid, methods, vo);
      for (std::size_t k = 0; k < methods.size(); ++k) eta[k] = tuned[k].best;
    } else {
      const auto regime = rule.mode == TuningRule::Mode::theory_discrete
                              ? Regime::discrete()
                              : Regime::continuous(cfg.generator.factor.d);
      const auto th = theory_eta(n, t, p_hat, sigma_sq, rule.plugin_constant, rule.delta, regime);
      std::fill(eta.begin(), eta.end(), th);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    return fail_all(e.what());
  }

  const auto candidates = neighbor_candidates(panel, target, split_for(panel, target, est_opts));
  const double z = cfg.alpha ? z_critical(*cfg.alpha) : 0.0;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    const auto method = methods[k];
    auto row = detail::base_row(cfg, n, t, rep, cfg.methods[k]);
    row.target_i = target.unit;
    row.target_t = target.time;
    row.eta1 = eta[k].eta1;
    row.eta2 = eta[k].eta2;
    try {
      auto sets = apply_thresholds(candidates, eta[k].eta1, eta[k].eta2);
      if (cfg.neighbor_cap.kind != NeighborCap::Kind::none) {
        Rng sub = make_rng(derive_seed(seed, {tag64("subsample"), tag64(to_string(method))}));
        subsample(sets.unit_neighbors, cfg.neighbor_cap.cap_for(sets.unit_neighbors.size()), sub);
        subsample(sets.time_neighbors, cfg.neighbor_cap.cap_for(sets.time_neighbors.size()), sub);
      }
      const auto e = estimate_with(panel, sets, method);
      const double err = e.value - truth;
      row.sq_error = err * err;
      row.n_unit = e.n_unit_used;
      row.n_time = e.n_time_used;
      if (e.method == EstimatePath::fallback_global) row.status = "fallback_global";
      if (e.method == EstimatePath::fallback_observed) row.status = "fallback_observed";
      if (cfg.alpha) {
        // DR-NN gets the J-based interval; the vanilla estimators get the
        // matching single-average interval z sigma / sqrt(p n).
        const double sigma_hat = std::sqrt(sigma_sq);
        std::optional<double> half;
        if (method == Method::dr) {
          try {
            const auto ci = confidence_interval(e.value, counts_of(e), sigma_hat, *cfg.alpha);
            half = ci.width() / 2.0;
          } catch (const DegenerateInterval&) {
            row.status = "degenerate_interval";
          }
        } else {
          const auto n_used = method == Method::unit ? e.n_unit_used : e.n_time_used;
          if (n_used > 0) {
            half = z * sigma_hat / std::sqrt(p_hat * static_cast<double>(n_used));
          } else {
            row.status = "degenerate_interval";
          }
        }
        if (half) {
          row.ci_width = 2.0 * *half;
          row.ci_covered = std::fabs(e.value - truth) <= *half;
        }
      }
    } catch (const Error& e) {
      row.sq_error = std::nan("");
      row.status = std::string("error: ") + e.what();
    }
    if (cfg.record_timing) row.wall_ms = detail::elapsed_ms(start);
    rows.push_back(std::move(row));
  }
  return rows;
}

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

// OLS of log(y) on log(x).
inline LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("fit needs >= 2 points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = std::log(x[k]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[k]) - my);
  }
  if (sxx == 0.0) throw InvalidArgument("fit needs at least two distinct x values");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double ssr = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double r = std::log(y[k]) - fit.intercept - fit.slope * std::log(x[k]);
      ssr += r * r;
    }
    fit.slope_se = std::sqrt(ssr / (n - 2.0) / sxx);
  }
  return fit;
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

struct SizeSummary {
  std::size_t n_units = 0;
  std::size_t n_times = 0;
  std::size_t count = 0;
  std::size_t failed = 0;
  double mean = 0.0;
  double median = 0.0;
  double iqr = 0.0;
  std::optional<double> coverage;
  std::optional<double> mean_width;
  std::optional<double> median_width;
};

struct MethodSummary {
  std::string method;
  std::vector<SizeSummary> per_size;
  std::optional<LogLogFit> fit;  // absent: SummaryIncomplete
  std::optional<double> coverage;
  std::optional<double> mean_width;
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<ResultRow> rows;
  std::vector<MethodSummary> summary;
  bool summary_incomplete = false;

  const MethodSummary* find(std::string_view method) const {
    for (const auto& m : summary) {
      if (m.method == method) return &m;
    }
    return nullptr;
  }
};

inline std::vector<MethodSummary> summarize(const ExperimentConfig& cfg,
                                            const std::vector<ResultRow>& rows,
                                            bool& incomplete) {
  std::vector<MethodSummary> out;
  incomplete = cfg.sizes.size() < 3;
  for (const auto& method : cfg.methods) {
    MethodSummary ms;
    ms.method = method;
    std::size_t covered = 0;
    std::size_t with_ci = 0;
    double width_sum = 0.0;
    for (const auto& [n, t] : cfg.sizes) {
      SizeSummary s;
      s.n_units = n;
      s.n_times = t;
      std::vector<double> errs;
      std::vector<double> widths;
      std::size_t size_covered = 0;
      for (const auto& r : rows) {
        if (r.method != method || r.n_units != n || r.n_times != t) continue;
        ++s.count;
        if (r.failed() || !std::isfinite(r.sq_error)) {
          ++s.failed;
          continue;
        }
        errs.push_back(r.sq_error);
        if (r.ci_width) {
          widths.push_back(*r.ci_width);
          if (*r.ci_covered) ++size_covered;
        }
      }
      std::sort(errs.begin(), errs.end());
      if (!errs.empty()) {
        double sum = 0.0;
        for (double e : errs) sum += e;
        s.mean = sum / static_cast<double>(errs.size());
        s.median = quantile_sorted(errs, 0.5);
        s.iqr = quantile_sorted(errs, 0.75) - quantile_sorted(errs, 0.25);
      } else {
        s.mean = s.median = s.iqr = std::nan("");
      }
      if (!widths.empty()) {
        double wsum = 0.0;
        for (double w : widths) wsum += w;
        s.coverage = static_cast<double>(size_covered) / static_cast<double>(widths.size());
        s.mean_width = wsum / static_cast<double>(widths.size());
        s.median_width = median(widths);
        covered += size_covered;
        with_ci += widths.size();
        width_sum += wsum;
      }
      ms.per_size.push_back(s);
    }
    if (with_ci) {
      ms.coverage = static_cast<double>(covered) / static_cast<double>(with_ci);
      ms.mean_width = width_sum / static_cast<double>(with_ci);
    }
    if (!incomplete) {
      std::vector<double> xs;
      std::vector<double> ys;
      for (const auto& s : ms.per_size) {
        if (std::isfinite(s.median) && s.median > 0.0) {
          xs.push_back(static_cast<double>(s.n_units));
          ys.push_back(s.median);
        }
      }
      try {
        if (xs.size() >= 2) ms.fit = fit_loglog(xs, ys);
      } catch (const InvalidArgument&) {
      }
      if (!ms.fit) incomplete = true;
    }
    out.push_back(std::move(ms));
  }
  return out;
}

// Runs every (size, replication) job, in parallel when workers > 1. Rows
// come back ordered by (size, method, replication) regardless of workers.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  if (cfg.sizes.empty()) throw ConfigError("experiment needs at least one size");
  if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
  const auto jobs = cfg.sizes.size() * cfg.replications;
  std::vector<std::vector<ResultRow>> per_job(jobs);
  parallel_for(jobs, cfg.workers, [&](std::size_t k) {
    const auto s = k / cfg.replications;
    const auto rep = k % cfg.replications;
    per_job[k] = run_replication(cfg, cfg.sizes[s], rep);
  });
  SweepResult result;
  result.config = cfg;
  for (std::size_t s = 0; s < cfg.sizes.size(); ++s) {
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
        const auto& rows = per_job[s * cfg.replications + rep];
        for (const auto& r : rows) {
          if (r.method == cfg.methods[m]) result.rows.push_back(r);
        }
      }
    }
  }
  result.summary = summarize(cfg, result.rows, result.summary_incomplete);
  return result;
}

struct CoverageReport {
  std::string method;
  double coverage = 0.0;
  double mean_width = 0.0;
  double nominal = 0.95;
  std::size_t intervals = 0;
};

inline std::vector<CoverageReport> coverage_experiment(ExperimentConfig cfg, SweepResult* out = nullptr) {
  cfg.scenario = Scenario::coverage;
  if (!cfg.alpha) cfg.alpha = 0.05;
  auto sweep = run_sweep(cfg);
  std::vector<CoverageReport> reports;
  for (const auto& ms : sweep.summary) {
    CoverageReport r;
    r.method = ms.method;
    r.nominal = 1.0 - *cfg.alpha;
    r.coverage = ms.coverage.value_or(std::nan(""));
    r.mean_width = ms.mean_width.value_or(std::nan(""));
    for (const auto& row : sweep.rows) {
      if (row.method == ms.method && row.ci_width) ++r.intervals;
    }
    reports.push_back(r);
  }
  if (out) *out = std::move(sweep);
  return reports;
}

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

inline std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace detail

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultHeader << '\n';
  for (const auto& r : rows) {
    out << detail::csv_text(r.scenario) << ',' << r.n_units << ',' << r.n_times << ','
        << detail::csv_number(r.p) << ',' << detail::csv_number(r.sigma) << ','
        << detail::csv_text(r.method) << ',' << r.replication << ',' << r.target_i << ','
        << r.target_t << ',' << detail::csv_number(r.sq_error) << ','
        << (r.ci_covered ? (*r.ci_covered ? "1" : "0") : "") << ','
        << (r.ci_width ? detail::csv_number(*r.ci_width) : "") << ',' << r.n_unit << ','
        << r.n_time << ',' << detail::csv_number(r.eta1) << ',' << detail::csv_number(r.eta2)
        << ',' << detail::csv_number(r.wall_ms) << ',' << detail::csv_text(r.status) << '\n';
  }
}

// Replaces any existing file.
inline void write_results_csv(const std::vector<ResultRow>& rows,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_results_csv(out, rows);
  if (!out) throw IoError("write failed for " + path.string());
}

inline nlohmann::json summary_json(const SweepResult& r) {
  auto num = [](std::optional<double> v) {
    return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["scenario"] = std::string(to_string(r.config.scenario));
  j["summary_incomplete"] = r.summary_incomplete;
  j["per_method"] = nlohmann::json::object();
  for (const auto& ms : r.summary) {
    nlohmann::json m;
    m["slope"] = ms.fit ? num(ms.fit->slope) : nlohmann::json(nullptr);
    m["slope_se"] = ms.fit ? num(ms.fit->slope_se) : nlohmann::json(nullptr);
    m["coverage"] = num(ms.coverage);
    m["mean_width"] = num(ms.mean_width);
    m["per_size"] = nlohmann::json::array();
    for (const auto& s : ms.per_size) {
      m["per_size"].push_back({{"N", s.n_units},
                               {"T", s.n_times},
                               {"count", s.count},
                               {"failed", s.failed},
                               {"mean", num(s.mean)},
                               {"median", num(s.median)},
                               {"iqr", num(s.iqr)},
                               {"coverage", num(s.coverage)},
                               {"mean_width", num(s.mean_width)},
                               {"median_width", num(s.median_width)}});
    }
    j["per_method"][ms.method] = m;
  }
  return j;
}

}  // namespace drnn
