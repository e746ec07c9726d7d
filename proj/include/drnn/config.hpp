#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "drnn/errors.hpp"
#include "drnn/experiment.hpp"
#include "drnn/synthetic.hpp"

namespace drnn {

namespace detail {

// Recursive-descent reader for the TOML subset the configs use: comments,
// [table] headers, dotted keys, strings, numbers, booleans, and (possibly
// multi-line, nested) arrays.
class TomlReader {
 public:
  explicit TomlReader(std::string text) : s_(std::move(text)) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    while (true) {
      skip_space_and_comments(true);
      if (pos_ >= s_.size()) break;
      if (s_[pos_] == '[') {
        ++pos_;
        if (peek() == '[') fail("arrays of tables are not supported");
        const auto path = key_path();
        skip_inline_space();
        expect(']');
        table = &descend(root, path, true);
      } else {
        const auto path = key_path();
        skip_inline_space();
        expect('=');
        skip_inline_space();
        auto value = parse_value();
        nlohmann::json* parent = table;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) parent = &descend(*parent, {path[k]}, false);
        if (parent->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*parent)[path.back()] = std::move(value);
      }
      end_of_line();
    }
    return root;
  }

 private:
  std::string s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("TOML line " + std::to_string(line_) + ": " + what);
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_inline_space() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_space_and_comments(bool newlines) {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '\n' && newlines) {
        ++line_;
        ++pos_;
      } else if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_space_and_comments(false);
    if (pos_ < s_.size() && s_[pos_] != '\n') fail("unexpected text after value");
  }

  std::string bare_or_quoted_key() {
    if (peek() == '"') return parse_string();
    std::string key;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') {
      key += s_[pos_++];
    }
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path;
    skip_inline_space();
    path.push_back(bare_or_quoted_key());
    skip_inline_space();
    while (peek() == '.') {
      ++pos_;
      skip_inline_space();
      path.push_back(bare_or_quoted_key());
      skip_inline_space();
    }
    return path;
  }

  nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path,
                          bool header) {
    nlohmann::json* node = &root;
    for (const auto& k : path) {
      if (!node->contains(k)) {
        (*node)[k] = nlohmann::json::object();
      } else if (!(*node)[k].is_object()) {
        fail("key '" + k + "' is not a table");
      }
      node = &(*node)[k];
    }
    (void)header;
    return *node;
  }

  std::string parse_string() {
    expect('"');
    std::string out;
    while (true) {
      if (pos_ >= s_.size() || s_[pos_] == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = peek();
      ++pos_;
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail("unsupported escape");
      }
    }
    return out;
  }

  nlohmann::json parse_value() {
    const char c = peek();
    if (c == '"') return parse_string();
    if (c == '[') {
      ++pos_;
      nlohmann::json arr = nlohmann::json::array();
      while (true) {
        skip_space_and_comments(true);
        if (peek() == ']') {
          ++pos_;
          return arr;
        }
        arr.push_back(parse_value());
        skip_space_and_comments(true);
        if (peek() == ',') {
          ++pos_;
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
    }
    std::string tok;
    while (pos_ < s_.size() && std::string_view(" \t\r\n,]#").find(s_[pos_]) == std::string_view::npos) {
      tok += s_[pos_++];
    }
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string clean;
    for (char ch : tok) {
      if (ch != '_') clean += ch;
    }
    if (clean == "inf" || clean == "+inf") return std::numeric_limits<double>::infinity();
    try {
      auto j = nlohmann::json::parse(clean.starts_with('+') ? clean.substr(1) : clean);
      if (j.is_number()) return j;
    } catch (const nlohmann::json::exception&) {
    }
    fail("cannot parse value '" + tok + "'");
  }
};

inline void check_keys(const nlohmann::json& obj, std::string_view where,
                       std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a table");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + std::string(where));
  }
}

template <typename T>
T get_as(const nlohmann::json& obj, std::string_view key, std::string_view where) {
  try {
    return obj.at(std::string(key)).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + std::string(where));
  }
}

template <typename T>
void read_opt(const nlohmann::json& obj, std::string_view key, std::string_view where, T& out) {
  if (obj.contains(std::string(key))) out = get_as<T>(obj, key, where);
}

inline std::size_t get_count(const nlohmann::json& obj, std::string_view key,
                             std::string_view where) {
  const auto& v = obj.at(std::string(key));
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError("'" + std::string(key) + "' in " + std::string(where) +
                      " must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

inline void read_count(const nlohmann::json& obj, std::string_view key, std::string_view where,
                       std::size_t& out) {
  if (obj.contains(std::string(key))) out = get_count(obj, key, where);
}

inline std::uint64_t get_seed(const nlohmann::json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError("seed must be an integer");
}

}  // namespace detail

// Text to JSON; TOML when `toml` is set, JSON otherwise.
inline nlohmann::json parse_config_text(const std::string& text, bool toml) {
  if (toml) return detail::TomlReader(text).parse();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON config: ") + e.what());
  }
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.extension() != ".json");
}

// Instance keys: n, t, sigma, p, seed, outlier_unit_scale, factor.{kind,
// unit_kind, time_kind, d, m, m_unit, m_time, c}, surface.{kind, fn},
// noise.{kind, bound}.
inline InstanceConfig instance_config_from_json(const nlohmann::json& j,
                                                std::string_view where = "generator") {
  using namespace detail;
  check_keys(j, where, {"n", "t", "sigma", "p", "seed", "outlier_unit_scale", "factor", "surface", "noise"});
  InstanceConfig c;
  read_count(j, "n", where, c.n_units);
  read_count(j, "t", where, c.n_times);
  read_opt(j, "sigma", where, c.sigma);
  read_opt(j, "p", where, c.p);
  if (j.contains("seed")) c.seed = get_seed(j.at("seed"));
  if (j.contains("outlier_unit_scale")) c.outlier_unit_scale = get_as<double>(j, "outlier_unit_scale", where);
  if (!(c.sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (!(c.p > 0.0 && c.p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
  if (j.contains("factor")) {
    const auto& f = j.at("factor");
    check_keys(f, "factor", {"kind", "unit_kind", "time_kind", "d", "m", "m_unit", "m_time", "c"});
    if (f.contains("kind")) {
      c.factor.unit_kind = c.factor.time_kind = parse_factor_kind(get_as<std::string>(f, "kind", "factor"));
    }
    if (f.contains("unit_kind")) c.factor.unit_kind = parse_factor_kind(get_as<std::string>(f, "unit_kind", "factor"));
    if (f.contains("time_kind")) c.factor.time_kind = parse_factor_kind(get_as<std::string>(f, "time_kind", "factor"));
    read_opt(f, "d", "factor", c.factor.d);
    if (f.contains("m")) c.factor.m_unit = c.factor.m_time = get_count(f, "m", "factor");
    read_count(f, "m_unit", "factor", c.factor.m_unit);
    read_count(f, "m_time", "factor", c.factor.m_time);
    read_opt(f, "c", "factor", c.factor.c);
    if (c.factor.d < 1) throw ConfigError("factor.d must be positive");
  }
  if (j.contains("surface")) {
    const auto& s = j.at("surface");
    check_keys(s, "surface", {"kind", "fn"});
    if (s.contains("kind")) {
      const auto kind = get_as<std::string>(s, "kind", "surface");
      if (kind == "bilinear") {
        c.surface.kind = SurfaceConfig::Kind::bilinear;
      } else if (kind == "nonlinear") {
        c.surface.kind = SurfaceConfig::Kind::nonlinear;
      } else {
        throw ConfigError("unknown surface kind '" + kind + "'");
      }
    }
    if (s.contains("fn")) c.surface.fn = parse_nonlinear_fn(get_as<std::string>(s, "fn", "surface"));
  }
  if (j.contains("noise")) {
    const auto& nz = j.at("noise");
    check_keys(nz, "noise", {"kind", "bound"});
    if (nz.contains("kind")) c.noise_kind = parse_noise_kind(get_as<std::string>(nz, "kind", "noise"));
    read_opt(nz, "bound", "noise", c.noise_bound);
  }
  return c;
}

inline TuningRule tuning_rule_from_json(const nlohmann::json& j) {
  using namespace detail;
  check_keys(j, "tuning", {"mode", "sigma_sq", "plugin_constant", "delta", "grid", "offsets",
                           "diagonal", "holdout_fraction", "max_eval_cells"});
  TuningRule r;
  if (j.contains("mode")) r.mode = parse_tuning_mode(get_as<std::string>(j, "mode", "tuning"));
  if (j.contains("sigma_sq")) r.sigma_sq = get_as<double>(j, "sigma_sq", "tuning");
  read_opt(j, "plugin_constant", "tuning", r.plugin_constant);
  read_opt(j, "delta", "tuning", r.delta);
  if (j.contains("grid")) {
    for (const auto& g : j.at("grid")) {
      if (!g.is_array() || g.size() != 2 || !g[0].is_number() || !g[1].is_number()) {
        throw ConfigError("tuning.grid entries must be [eta1, eta2]");
      }
      r.grid.push_back({g[0].get<double>(), g[1].get<double>()});
    }
    if (r.grid.empty()) throw ConfigError("tuning.grid is empty");
  }
  if (j.contains("offsets")) r.offsets = get_as<std::vector<double>>(j, "offsets", "tuning");
  read_opt(j, "diagonal", "tuning", r.diagonal);
  read_opt(j, "holdout_fraction", "tuning", r.holdout_fraction);
  read_count(j, "max_eval_cells", "tuning", r.max_eval_cells);
  if (r.sigma_sq && !(*r.sigma_sq >= 0.0)) throw ConfigError("tuning.sigma_sq must be >= 0");
  if (!(r.plugin_constant > 0.0)) throw ConfigError("tuning.plugin_constant must be positive");
  if (!(r.delta > 0.0 && r.delta < 1.0)) throw ConfigError("tuning.delta must lie in (0, 1)");
  return r;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using namespace detail;
  check_keys(j, "config",
             {"scenario", "sizes", "replications", "generator", "tensor_interventions", "methods",
              "tuning", "alpha", "sigma_source", "neighbor_cap", "split", "target_unit",
              "base_seed", "output_path", "workers", "record_timing"});
  ExperimentConfig c;
  if (j.contains("scenario")) c.scenario = parse_scenario(get_as<std::string>(j, "scenario", "config"));
  if (j.contains("sizes")) {
    c.sizes.clear();
    for (const auto& s : j.at("sizes")) {
      if (s.is_number_integer() && s.get<std::int64_t>() > 0) {
        c.sizes.emplace_back(s.get<std::size_t>(), s.get<std::size_t>());
      } else if (s.is_array() && s.size() == 2 && s[0].is_number_integer() &&
                 s[1].is_number_integer() && s[0].get<std::int64_t>() > 0 &&
                 s[1].get<std::int64_t>() > 0) {
        c.sizes.emplace_back(s[0].get<std::size_t>(), s[1].get<std::size_t>());
      } else {
        throw ConfigError("sizes entries must be N or [N, T] with positive integers");
      }
    }
  }
  if (c.sizes.empty()) throw ConfigError("sizes must be nonempty");
  read_count(j, "replications", "config", c.replications);
  if (c.replications < 1) throw ConfigError("replications must be >= 1");
  if (j.contains("generator")) c.generator = instance_config_from_json(j.at("generator"));
  read_count(j, "tensor_interventions", "config", c.tensor_interventions);
  if (j.contains("methods")) {
    c.methods = get_as<std::vector<std::string>>(j, "methods", "config");
    for (const auto& m : c.methods) {
      if (m == "tr" || m == "intervention") {
        if (c.scenario != Scenario::tensor_demo) {
          throw ConfigError("method '" + m + "' needs scenario tensor_demo");
        }
      } else if (m != "unit" && m != "time" && m != "dr") {
        throw ConfigError("unknown method '" + m + "'");
      } else if (m == "dr" && c.scenario == Scenario::tensor_demo) {
        throw ConfigError("tensor_demo supports tr, unit, time, intervention");
      }
    }
  } else if (c.scenario == Scenario::tensor_demo) {
    c.methods = {"tr", "unit"};
  }
  if (j.contains("tuning")) c.tuning = tuning_rule_from_json(j.at("tuning"));
  if (j.contains("alpha")) {
    c.alpha = get_as<double>(j, "alpha", "config");
    if (!(*c.alpha > 0.0 && *c.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  }
  if (j.contains("sigma_source")) {
    const auto s = get_as<std::string>(j, "sigma_source", "config");
    if (s == "known") {
      c.sigma_source = SigmaSource::known;
    } else if (s == "estimated") {
      c.sigma_source = SigmaSource::estimated;
    } else {
      throw ConfigError("sigma_source must be known or estimated");
    }
  }
  if (j.contains("neighbor_cap")) {
    const auto& v = j.at("neighbor_cap");
    if (v.is_string() && v.get<std::string>() == "none") {
      c.neighbor_cap.kind = NeighborCap::Kind::none;
    } else if (v.is_string() && v.get<std::string>() == "sqrt") {
      c.neighbor_cap.kind = NeighborCap::Kind::sqrt;
    } else if (v.is_number_integer() && v.get<std::int64_t>() > 0) {
      c.neighbor_cap.kind = NeighborCap::Kind::fixed;
      c.neighbor_cap.fixed = v.get<std::size_t>();
    } else {
      throw ConfigError("neighbor_cap must be \"none\", \"sqrt\", or a positive integer");
    }
  } else if (c.scenario == Scenario::coverage) {
    c.neighbor_cap.kind = NeighborCap::Kind::sqrt;
  }
  if (j.contains("split")) {
    const auto s = get_as<std::string>(j, "split", "config");
    if (s == "bernoulli_half") {
      c.split = SplitMode::bernoulli_half;
    } else if (s == "exact_half") {
      c.split = SplitMode::exact_half;
    } else if (s != "none") {
      throw ConfigError("split must be none, bernoulli_half, or exact_half");
    }
  }
  if (j.contains("target_unit")) c.target_unit = get_count(j, "target_unit", "config");
  if (j.contains("base_seed")) c.base_seed = get_seed(j.at("base_seed"));
  read_opt(j, "output_path", "config", c.output_path);
  read_count(j, "workers", "config", c.workers);
  read_opt(j, "record_timing", "config", c.record_timing);
  if (c.scenario == Scenario::coverage && !c.alpha) c.alpha = 0.05;
  if (c.scenario == Scenario::robustness && !c.target_unit) c.target_unit = 0;
  for (const auto& [n, t] : c.sizes) {
    if (c.target_unit && *c.target_unit >= n) throw ConfigError("target_unit out of range");
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_config_from_json(read_config_file(path));
}

inline InstanceConfig load_instance_config(const std::filesystem::path& path) {
  const auto j = read_config_file(path);
  // Either a bare instance table or an experiment config's [generator].
  if (j.contains("generator")) return instance_config_from_json(j.at("generator"));
  return instance_config_from_json(j, "instance config");
}

}  // namespace drnn
