#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drnn/drnn.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_index_list(const std::string& s, std::size_t want) {
  std::vector<std::size_t> out;
  for (auto tok : drnn::detail::split_commas(s)) {
    tok = drnn::detail::trim(tok);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) {
      throw UsageError("bad index list '" + s + "'");
    }
    out.push_back(v);
  }
  if (out.size() != want) throw UsageError("expected " + std::to_string(want) + " indices in '" + s + "'");
  return out;
}

// Two numeric columns per line; a non-numeric first line is a header.
std::vector<drnn::Thresholds> load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw drnn::IoError("cannot open grid file " + path);
  std::vector<drnn::Thresholds> grid;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = drnn::detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = drnn::detail::split_commas(t);
    double a = 0.0;
    double b = 0.0;
    if (cells.size() != 2 || !drnn::detail::parse_double(drnn::detail::trim(cells[0]), a) ||
        !drnn::detail::parse_double(drnn::detail::trim(cells[1]), b)) {
      if (grid.empty() && lineno == 1) continue;
      throw drnn::ParseError("grid file line " + std::to_string(lineno) + ": expected eta1,eta2");
    }
    if (!(a >= 0.0 && b >= 0.0)) throw drnn::ParseError("grid thresholds must be nonnegative");
    grid.push_back({a, b});
  }
  if (grid.empty()) throw drnn::ParseError("grid file has no rows");
  return grid;
}

std::vector<drnn::Thresholds> default_grid(const drnn::ObservationPanel& panel, std::uint64_t seed) {
  const double base = 2.0 * drnn::noise_variance_from_distances(panel, 50, seed);
  const double offsets[] = {-0.05, 0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2};
  return drnn::offset_grid(base, offsets, true);
}

drnn::SplitMode parse_split_mode(const std::string& s) {
  if (s == "bernoulli_half") return drnn::SplitMode::bernoulli_half;
  if (s == "exact_half") return drnn::SplitMode::exact_half;
  throw UsageError("split mode must be bernoulli_half or exact_half");
}

struct CompleteArgs {
  std::string input;
  std::string missing_token = "NA";
  std::string method = "dr";
  std::optional<double> eta1;
  std::optional<double> eta2;
  std::optional<std::uint64_t> split_seed;
  std::string split_mode = "bernoulli_half";
  std::optional<std::size_t> max_neighbors;
  std::string output;
  std::optional<double> ci;
  std::optional<double> sigma_hat;
  std::string grid_file;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  std::string dump_neighbors;
  std::vector<std::string> targets;
  std::size_t workers = 1;
  bool json = false;
};

int run_complete(const CompleteArgs& a) {
  const auto method = drnn::parse_method(a.method);
  const auto panel = drnn::load_panel(a.input, a.missing_token);
  drnn::EstimateOptions opts;
  opts.split_seed = a.split_seed;
  opts.split_mode = parse_split_mode(a.split_mode);
  opts.max_neighbors = a.max_neighbors;

  std::optional<std::vector<drnn::Thresholds>> grid;
  auto get_grid = [&]() -> const std::vector<drnn::Thresholds>& {
    if (!grid) grid = a.grid_file.empty() ? default_grid(panel, a.seed) : load_grid(a.grid_file);
    return *grid;
  };
  drnn::HoldoutOptions holdout{a.holdout_fraction, a.seed, 0};

  drnn::Thresholds eta;
  std::optional<drnn::TuningResult> tuned;
  if (a.eta1 && a.eta2) {
    eta = {*a.eta1, *a.eta2};
  } else if (a.eta1 || a.eta2) {
    throw UsageError("give both --eta1 and --eta2, or neither to tune");
  } else {
    tuned = drnn::validation_tune(panel, get_grid(), method, {holdout, opts});
    eta = tuned->best;
  }

  std::optional<std::vector<drnn::TargetCell>> cells;
  if (!a.targets.empty()) {
    cells.emplace();
    for (const auto& s : a.targets) {
      const auto v = parse_index_list(s, 2);
      cells->push_back({v[0], v[1]});
    }
  }
  const auto estimates = drnn::complete_matrix(panel, eta, method, opts, cells, a.workers);

  std::optional<double> sigma_hat;
  if (a.ci) {
    if (!(*a.ci > 0.0 && *a.ci < 1.0)) throw UsageError("--ci needs alpha in (0, 1)");
    sigma_hat = a.sigma_hat;
    if (!sigma_hat) {
      const double s2 = drnn::estimate_noise_variance(panel, get_grid(), drnn::Method::dr, {holdout, opts});
      sigma_hat = std::sqrt(s2);
    }
  }

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!a.output.empty()) {
    file.open(a.output, std::ios::trunc);
    if (!file) throw drnn::IoError("cannot open " + a.output + " for writing");
    out = &file;
  }
  const bool csv_to_stdout = a.output.empty() && !a.json;
  std::ostringstream sink;
  std::ostream& csv = csv_to_stdout || !a.output.empty() ? *out : sink;
  csv << "i,t,method,value,n_unit,n_time,n_cross";
  if (a.ci) csv << ",lower,upper,j_eff,sigma_hat";
  csv << '\n';
  std::size_t degenerate = 0;
  using drnn::detail::format_double;
  for (const auto& e : estimates) {
    csv << e.target.unit << ',' << e.target.time << ',' << drnn::to_string(e.method) << ','
        << format_double(e.value) << ',' << e.n_unit_used << ',' << e.n_time_used << ','
        << e.n_cross_terms;
    if (a.ci) {
      try {
        const auto ci = drnn::confidence_interval(e.value, drnn::counts_of(e), *sigma_hat, *a.ci);
        csv << ',' << format_double(ci.lower) << ',' << format_double(ci.upper) << ','
            << format_double(ci.j_eff) << ',' << format_double(ci.sigma_hat);
      } catch (const drnn::DegenerateInterval&) {
        ++degenerate;
        csv << ",,,," << format_double(*sigma_hat);
      }
    }
    csv << '\n';
  }
  if (!a.dump_neighbors.empty()) {
    nlohmann::json dump = nlohmann::json::array();
    const auto targets = cells ? *cells : drnn::all_cells(panel.n_units(), panel.n_times());
    for (const auto& c : targets) {
      auto sets = drnn::select_neighbors(panel, c, eta.eta1, eta.eta2, drnn::split_for(panel, c, opts));
      dump.push_back(drnn::to_json(sets));
    }
    std::ofstream d(a.dump_neighbors, std::ios::trunc);
    if (!d) throw drnn::IoError("cannot open " + a.dump_neighbors + " for writing");
    d << dump.dump(2) << '\n';
  }
  if (a.json) {
    nlohmann::json j{{"cells", estimates.size()},
                     {"method", a.method},
                     {"eta1", eta.eta1},
                     {"eta2", eta.eta2},
                     {"tuned", tuned.has_value()},
                     {"output", a.output.empty() ? nlohmann::json(nullptr) : nlohmann::json(a.output)}};
    std::size_t fallbacks = 0;
    for (const auto& e : estimates) {
      if (e.method == drnn::EstimatePath::fallback_global ||
          e.method == drnn::EstimatePath::fallback_observed) {
        ++fallbacks;
      }
    }
    j["fallbacks"] = fallbacks;
    if (a.ci) {
      j["alpha"] = *a.ci;
      j["sigma_hat"] = *sigma_hat;
      j["degenerate_intervals"] = degenerate;
    }
    std::cout << j.dump() << '\n';
  }
  return kOk;
}

struct TuneArgs {
  std::string input;
  std::string missing_token = "NA";
  std::string grid_file;
  std::string method = "dr";
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;
  std::size_t max_eval_cells = 0;
  bool json = false;
};

int run_tune(const TuneArgs& a) {
  const auto method = drnn::parse_method(a.method);
  const auto panel = drnn::load_panel(a.input, a.missing_token);
  const auto grid = a.grid_file.empty() ? default_grid(panel, a.seed) : load_grid(a.grid_file);
  drnn::ValidationOptions vo;
  vo.holdout = {a.holdout_fraction, a.seed, a.max_eval_cells};
  vo.estimate.split_seed = a.split_seed;
  const auto r = drnn::validation_tune(panel, grid, method, vo);
  if (a.json) {
    nlohmann::json table = nlohmann::json::array();
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
      table.push_back({{"eta1", r.grid[g].eta1},
                       {"eta2", r.grid[g].eta2},
                       {"mse", std::isfinite(r.mse[g]) ? nlohmann::json(r.mse[g]) : nlohmann::json(nullptr)}});
    }
    std::cout << nlohmann::json{{"method", a.method},
                                {"eta1", r.best.eta1},
                                {"eta2", r.best.eta2},
                                {"mse", r.best_mse},
                                {"grid", table}}
                     .dump()
              << '\n';
    return kOk;
  }
  using drnn::detail::format_double;
  std::cout << "eta1,eta2,mse\n";
  for (std::size_t g = 0; g < r.grid.size(); ++g) {
    std::cout << format_double(r.grid[g].eta1) << ',' << format_double(r.grid[g].eta2) << ','
              << (std::isfinite(r.mse[g]) ? format_double(r.mse[g]) : "inf") << '\n';
  }
  std::cout << "best eta1=" << format_double(r.best.eta1) << " eta2=" << format_double(r.best.eta2)
            << " mse=" << format_double(r.best_mse) << '\n';
  return kOk;
}

struct SimulateArgs {
  std::string config;
  std::string output;
  std::string truth;
  std::optional<std::uint64_t> seed;
  std::string missing_token = "NA";
  bool json = false;
};

int run_simulate(const SimulateArgs& a) {
  auto cfg = drnn::load_instance_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const auto inst = drnn::gen_instance(cfg);
  if (a.output.empty()) {
    drnn::write_panel(std::cout, inst.panel, a.missing_token);
  } else {
    drnn::save_panel(inst.panel, a.output, a.missing_token);
  }
  if (!a.truth.empty()) {
    drnn::MaskMatrix full(inst.theta.rows(), inst.theta.cols(), 1);
    drnn::save_panel(drnn::ObservationPanel(inst.theta, std::move(full)), a.truth, a.missing_token);
  }
  if (a.json) {
    std::cout << nlohmann::json{{"n", cfg.n_units},
                                {"t", cfg.n_times},
                                {"observed", inst.panel.observed_count()},
                                {"density", drnn::mask_density(inst.panel)},
                                {"seed", cfg.seed}}
                     .dump()
              << '\n';
  }
  return kOk;
}

struct SweepArgs {
  std::string config;
  std::string output;
  std::string summary;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

int run_sweep_cmd(const SweepArgs& a, bool coverage) {
  auto cfg = drnn::load_experiment_config(a.config);
  if (!a.output.empty()) cfg.output_path = a.output;
  if (a.workers) cfg.workers = *a.workers;
  if (a.seed) cfg.base_seed = *a.seed;
  drnn::SweepResult result;
  if (coverage) {
    if (cfg.scenario == drnn::Scenario::tensor_demo) throw UsageError("coverage needs a matrix scenario");
    drnn::coverage_experiment(cfg, &result);
  } else {
    result = drnn::run_sweep(cfg);
  }
  if (!cfg.output_path.empty()) {
    drnn::write_results_csv(result.rows, cfg.output_path);
  } else if (!a.json) {
    drnn::write_results_csv(std::cout, result.rows);
  }
  const auto summary = drnn::summary_json(result);
  if (!a.summary.empty()) {
    std::ofstream s(a.summary, std::ios::trunc);
    if (!s) throw drnn::IoError("cannot open " + a.summary + " for writing");
    s << summary.dump(2) << '\n';
  }
  if (a.json) std::cout << summary.dump() << '\n';
  return kOk;
}

struct TensorArgs {
  std::string manifest;
  std::string target;
  double eta1 = 0.0;
  double eta2 = 0.0;
  double eta3 = 0.0;
  std::optional<std::uint64_t> split_seed;
  std::string method = "tr";
  bool json = false;
};

int run_tensor(const TensorArgs& a) {
  const auto x = drnn::load_tensor_manifest(a.manifest);
  const auto v = parse_index_list(a.target, 3);
  const drnn::TensorCell cell{v[0], v[1], v[2]};
  const auto sets = drnn::tensor_neighbors(x, cell, {a.eta1, a.eta2, a.eta3}, a.split_seed);
  drnn::TensorEstimate e;
  if (a.method == "tr") {
    e = drnn::estimate_tr_nn(x, sets);
  } else if (a.method == "unit") {
    e = drnn::estimate_tensor_single_mode(x, sets, drnn::TensorMode::unit);
  } else if (a.method == "time") {
    e = drnn::estimate_tensor_single_mode(x, sets, drnn::TensorMode::time);
  } else if (a.method == "intervention") {
    e = drnn::estimate_tensor_single_mode(x, sets, drnn::TensorMode::intervention);
  } else {
    throw UsageError("tensor method must be tr, unit, time, or intervention");
  }
  const char* path = e.method == drnn::TensorPath::tr_nn           ? "tr_nn"
                     : e.method == drnn::TensorPath::single_mode     ? "single_mode"
                     : e.method == drnn::TensorPath::fallback_observed ? "fallback_observed"
                                                                       : "fallback_global";
  if (a.json) {
    std::cout << nlohmann::json{{"i", cell.unit},
                                {"t", cell.time},
                                {"a", cell.intervention},
                                {"method", path},
                                {"value", e.value},
                                {"n_terms", e.n_terms},
                                {"unit_neighbors", sets.neighbors[0]},
                                {"time_neighbors", sets.neighbors[1]},
                                {"intervention_neighbors", sets.neighbors[2]}}
                     .dump()
              << '\n';
  } else {
    std::cout << "i,t,a,method,value,n_terms\n"
              << cell.unit << ',' << cell.time << ',' << cell.intervention << ',' << path << ','
              << drnn::detail::format_double(e.value) << ',' << e.n_terms << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust nearest-neighbor matrix completion"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CompleteArgs ca;
  auto* complete = app.add_subcommand("complete", "Estimate entries of a panel");
  complete->add_option("--input", ca.input, "Panel CSV")->required();
  complete->add_option("--missing-token", ca.missing_token, "Token for missing cells");
  complete->add_option("--method", ca.method, "unit, time, or dr")->check(CLI::IsMember({"unit", "time", "dr"}));
  complete->add_option("--eta1", ca.eta1, "Unit threshold")->check(CLI::NonNegativeNumber);
  complete->add_option("--eta2", ca.eta2, "Time threshold")->check(CLI::NonNegativeNumber);
  complete->add_option("--split-seed", ca.split_seed, "Enable the 2x2 sample split");
  complete->add_option("--split-mode", ca.split_mode, "bernoulli_half or exact_half");
  complete->add_option("--max-neighbors", ca.max_neighbors, "Cap each neighbor set");
  complete->add_option("--output", ca.output, "Estimates CSV (default stdout)");
  complete->add_option("--ci", ca.ci, "Add (1 - alpha) intervals");
  complete->add_option("--sigma-hat", ca.sigma_hat, "Noise standard deviation for intervals");
  complete->add_option("--grid-file", ca.grid_file, "eta1,eta2 grid used when tuning");
  complete->add_option("--holdout-fraction", ca.holdout_fraction, "Holdout share for tuning");
  complete->add_option("--seed", ca.seed, "Holdout seed");
  complete->add_option("--dump-neighbors", ca.dump_neighbors, "Write neighbor sets as JSON");
  complete->add_option("--target", ca.targets, "Only estimate cell i,t (repeatable)");
  complete->add_option("--workers", ca.workers, "Worker threads (0 = all cores)");
  complete->add_flag("--json", ca.json, "Print a JSON summary");

  TuneArgs ta;
  auto* tune = app.add_subcommand("tune", "Validation search over a threshold grid");
  tune->add_option("--input", ta.input, "Panel CSV")->required();
  tune->add_option("--missing-token", ta.missing_token, "Token for missing cells");
  tune->add_option("--grid-file", ta.grid_file, "eta1,eta2 grid (default: offsets around 2 sigma^2)");
  tune->add_option("--method", ta.method, "unit, time, or dr")->check(CLI::IsMember({"unit", "time", "dr"}));
  tune->add_option("--holdout-fraction", ta.holdout_fraction, "Holdout share");
  tune->add_option("--seed", ta.seed, "Holdout seed");
  tune->add_option("--split-seed", ta.split_seed, "Enable the 2x2 sample split");
  tune->add_option("--max-eval-cells", ta.max_eval_cells, "Subsample held-out cells (0 = all)");
  tune->add_flag("--json", ta.json, "Print JSON instead of a table");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel");
  simulate->add_option("--config", sa.config, "Instance config (TOML or JSON)")->required();
  simulate->add_option("--output", sa.output, "Panel CSV (default stdout)");
  simulate->add_option("--truth", sa.truth, "Ground-truth mean CSV");
  simulate->add_option("--seed", sa.seed, "Override the config seed");
  simulate->add_option("--missing-token", sa.missing_token, "Token for missing cells");
  simulate->add_flag("--json", sa.json, "Print a JSON summary");

  SweepArgs wa;
  auto* sweep = app.add_subcommand("sweep", "Run a Monte Carlo experiment");
  SweepArgs cva;
  auto* coverage = app.add_subcommand("coverage", "Run a confidence-interval coverage experiment");
  for (auto [cmd, args] : {std::pair{sweep, &wa}, std::pair{coverage, &cva}}) {
    cmd->add_option("--config", args->config, "Experiment config (TOML or JSON)")->required();
    cmd->add_option("--output", args->output, "Results CSV (overrides output_path)");
    cmd->add_option("--summary", args->summary, "Summary JSON file");
    cmd->add_option("--workers", args->workers, "Worker threads (0 = all cores)");
    cmd->add_option("--seed", args->seed, "Override base_seed");
    cmd->add_flag("--json", args->json, "Print the summary JSON");
  }

  TensorArgs xa;
  auto* tensor = app.add_subcommand("tensor", "Estimate one tensor entry");
  tensor->add_option("--manifest", xa.manifest, "Slice manifest JSON")->required();
  tensor->add_option("--target", xa.target, "Cell i,t,a")->required();
  tensor->add_option("--eta1", xa.eta1, "Unit threshold")->check(CLI::NonNegativeNumber);
  tensor->add_option("--eta2", xa.eta2, "Time threshold")->check(CLI::NonNegativeNumber);
  tensor->add_option("--eta3", xa.eta3, "Intervention threshold")->check(CLI::NonNegativeNumber);
  tensor->add_option("--split-seed", xa.split_seed, "Enable the sample split");
  tensor->add_option("--method", xa.method, "tr, unit, time, or intervention");
  tensor->add_flag("--json", xa.json, "Print JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*complete) return run_complete(ca);
    if (*tune) return run_tune(ta);
    if (*simulate) return run_simulate(sa);
    if (*sweep) return run_sweep_cmd(wa, false);
    if (*coverage) return run_sweep_cmd(cva, true);
    if (*tensor) return run_tensor(xa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const drnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const drnn::InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const drnn::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
