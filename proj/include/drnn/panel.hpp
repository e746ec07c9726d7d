#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drnn/errors.hpp"

// Define DRNN_CHECKED_ACCESS to turn reads of masked outcomes into
// MaskedAccess exceptions instead of silently returning the NaN sentinel.
#ifdef DRNN_CHECKED_ACCESS
#define DRNN_ASSERT_OBSERVED(cond, msg)        \
  do {                                         \
    if (!(cond)) throw ::drnn::MaskedAccess(msg); \
  } while (0)
#else
#define DRNN_ASSERT_OBSERVED(cond, msg) ((void)0)
#endif

namespace drnn {

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using RealMatrix = Matrix<double>;
using MaskMatrix = Matrix<std::uint8_t>;

struct TargetCell {
  std::size_t unit = 0;
  std::size_t time = 0;

  friend auto operator<=>(const TargetCell&, const TargetCell&) = default;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Masked outcome matrix: the (Y, A) pair. The mask is authoritative; masked
// cells hold a quiet NaN so that accidental reads poison downstream sums.
class ObservationPanel {
 public:
  ObservationPanel() = default;

  ObservationPanel(RealMatrix outcomes, MaskMatrix mask)
      : outcomes_(std::move(outcomes)), mask_(std::move(mask)) {
    if (outcomes_.rows() != mask_.rows() || outcomes_.cols() != mask_.cols()) {
      throw InvalidArgument("outcomes and mask dimensions differ");
    }
    auto y = outcomes_.flat();
    auto m = mask_.flat();
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (m[k] > 1) throw InvalidArgument("mask entries must be 0 or 1");
      if (m[k] == 0) {
        y[k] = kMissing;
      } else {
        if (!std::isfinite(y[k])) {
          throw InvalidArgument("observed outcome is not finite at flat index " +
                                std::to_string(k));
        }
        ++observed_;
      }
    }
  }

  static ObservationPanel fully_observed(RealMatrix outcomes) {
    MaskMatrix mask(outcomes.rows(), outcomes.cols(), 1);
    return {std::move(outcomes), std::move(mask)};
  }

  std::size_t n_units() const noexcept { return mask_.rows(); }
  std::size_t n_times() const noexcept { return mask_.cols(); }
  std::size_t observed_count() const noexcept { return observed_; }
  bool empty() const noexcept { return mask_.empty(); }

  bool observed(std::size_t i, std::size_t t) const { return mask_(i, t) != 0; }

  double value(std::size_t i, std::size_t t) const {
    DRNN_ASSERT_OBSERVED(observed(i, t), "read of masked outcome (" +
                                             std::to_string(i) + "," +
                                             std::to_string(t) + ")");
    return outcomes_(i, t);
  }

  // Raw row views. Entries where the mask row is 0 are NaN.
  std::span<const double> outcome_row(std::size_t i) const {
    return outcomes_.row(i);
  }
  std::span<const std::uint8_t> mask_row(std::size_t i) const {
    return mask_.row(i);
  }

  const MaskMatrix& mask() const noexcept { return mask_; }
  const RealMatrix& raw_outcomes() const noexcept { return outcomes_; }

  // Copy with the given cells additionally masked out.
  ObservationPanel with_hidden(std::span<const TargetCell> cells) const {
    ObservationPanel out = *this;
    for (const auto& c : cells) {
      if (out.mask_(c.unit, c.time) != 0) {
        out.mask_(c.unit, c.time) = 0;
        out.outcomes_(c.unit, c.time) = kMissing;
        --out.observed_;
      }
    }
    return out;
  }

  bool contains(const TargetCell& c) const noexcept {
    return c.unit < n_units() && c.time < n_times();
  }

  friend bool operator==(const ObservationPanel& a, const ObservationPanel& b) {
    if (a.mask_ != b.mask_) return false;
    auto ya = a.outcomes_.flat();
    auto yb = b.outcomes_.flat();
    auto m = a.mask_.flat();
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k] && ya[k] != yb[k]) return false;
    }
    return true;
  }

 private:
  RealMatrix outcomes_;
  MaskMatrix mask_;
  std::size_t observed_ = 0;
};

// Empirical observation probability.
inline double mask_density(const ObservationPanel& panel) {
  const auto cells = panel.mask().size();
  if (cells == 0) return 0.0;
  return static_cast<double>(panel.observed_count()) /
         static_cast<double>(cells);
}

// Order-3 tensor indexed (unit, time, intervention).
class ObservationTensor {
 public:
  ObservationTensor() = default;

  ObservationTensor(std::size_t n_units, std::size_t n_times,
                    std::size_t n_interventions, std::vector<double> outcomes,
                    std::vector<std::uint8_t> mask)
      : dims_{n_units, n_times, n_interventions},
        outcomes_(std::move(outcomes)),
        mask_(std::move(mask)) {
    const auto n = n_units * n_times * n_interventions;
    if (outcomes_.size() != n || mask_.size() != n) {
      throw InvalidArgument("tensor storage does not match its dimensions");
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (mask_[k] > 1) throw InvalidArgument("mask entries must be 0 or 1");
      if (mask_[k] == 0) {
        outcomes_[k] = kMissing;
      } else if (!std::isfinite(outcomes_[k])) {
        throw InvalidArgument("observed tensor outcome is not finite");
      }
    }
  }

  std::size_t dim(int mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  std::size_t n_units() const noexcept { return dims_[0]; }
  std::size_t n_times() const noexcept { return dims_[1]; }
  std::size_t n_interventions() const noexcept { return dims_[2]; }

  std::size_t index(std::size_t i, std::size_t t, std::size_t a) const noexcept {
    return (i * dims_[1] + t) * dims_[2] + a;
  }
  bool observed(std::size_t i, std::size_t t, std::size_t a) const {
    return mask_[index(i, t, a)] != 0;
  }
  double value(std::size_t i, std::size_t t, std::size_t a) const {
    DRNN_ASSERT_OBSERVED(observed(i, t, a), "read of masked tensor outcome");
    return outcomes_[index(i, t, a)];
  }

  ObservationTensor with_hidden(std::size_t i, std::size_t t, std::size_t a) const {
    ObservationTensor out = *this;
    const auto k = index(i, t, a);
    out.mask_[k] = 0;
    out.outcomes_[k] = kMissing;
    return out;
  }

  // N x T matrix for a fixed intervention index.
  ObservationPanel slice(std::size_t a) const {
    RealMatrix y(n_units(), n_times(), 0.0);
    MaskMatrix m(n_units(), n_times(), 0);
    for (std::size_t i = 0; i < n_units(); ++i) {
      for (std::size_t t = 0; t < n_times(); ++t) {
        if (observed(i, t, a)) {
          y(i, t) = outcomes_[index(i, t, a)];
          m(i, t) = 1;
        }
      }
    }
    return {std::move(y), std::move(m)};
  }

  static ObservationTensor from_slices(std::span<const ObservationPanel> slices) {
    if (slices.empty()) throw InvalidArgument("tensor needs at least one slice");
    const auto n = slices[0].n_units();
    const auto t = slices[0].n_times();
    const auto m = slices.size();
    std::vector<double> y(n * t * m, 0.0);
    std::vector<std::uint8_t> mask(n * t * m, 0);
    for (std::size_t a = 0; a < m; ++a) {
      if (slices[a].n_units() != n || slices[a].n_times() != t) {
        throw InvalidArgument("tensor slices differ in shape");
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t s = 0; s < t; ++s) {
          const auto k = (i * t + s) * m + a;
          if (slices[a].observed(i, s)) {
            y[k] = slices[a].value(i, s);
            mask[k] = 1;
          }
        }
      }
    }
    return {n, t, m, std::move(y), std::move(mask)};
  }

 private:
  std::size_t dims_[3] = {0, 0, 0};
  std::vector<double> outcomes_;
  std::vector<std::uint8_t> mask_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline void check_token(std::string_view token) {
  double ignored = 0.0;
  if (token.empty() || token.find(',') != std::string_view::npos ||
      token.find('\n') != std::string_view::npos) {
    throw ConfigError("missing token must be non-empty and contain no comma");
  }
  if (parse_double(token, ignored)) {
    throw ConfigError("missing token '" + std::string(token) +
                      "' is numeric; it must be non-numeric");
  }
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  return {buf, ptr};
}

}  // namespace detail

// Reads a comma-delimited panel. An optional first line
// "# units=N times=T" is checked against the body when present.
inline ObservationPanel parse_panel(std::istream& in,
                                    std::string_view missing_token = "NA") {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  std::size_t cols = 0;
  std::size_t rows = 0;
  long header_units = -1;
  long header_times = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      if (rows == 0) {
        std::istringstream hs{std::string(view.substr(1))};
        std::string kv;
        while (hs >> kv) {
          if (kv.rfind("units=", 0) == 0) header_units = std::stol(kv.substr(6));
          if (kv.rfind("times=", 0) == 0) header_times = std::stol(kv.substr(6));
        }
      }
      continue;
    }
    const auto cells = detail::split_commas(view);
    if (rows == 0) {
      cols = cells.size();
    } else if (cells.size() != cols) {
      throw ParseError("ragged row at line " + std::to_string(line_no) +
                       ": expected " + std::to_string(cols) + " cells, got " +
                       std::to_string(cells.size()));
    }
    for (const auto cell : cells) {
      if (cell == missing_token) {
        values.push_back(0.0);
        mask.push_back(0);
        continue;
      }
      double v = 0.0;
      if (!detail::parse_double(cell, v) || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + std::string(cell) +
                         "' at line " + std::to_string(line_no));
      }
      values.push_back(v);
      mask.push_back(1);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("panel file has no data rows");
  if ((header_units >= 0 && static_cast<std::size_t>(header_units) != rows) ||
      (header_times >= 0 && static_cast<std::size_t>(header_times) != cols)) {
    throw ParseError("header dimensions disagree with the data");
  }
  RealMatrix y(rows, cols);
  MaskMatrix m(rows, cols);
  std::copy(values.begin(), values.end(), y.flat().begin());
  std::copy(mask.begin(), mask.end(), m.flat().begin());
  return {std::move(y), std::move(m)};
}

inline ObservationPanel load_panel(const std::filesystem::path& path,
                                   std::string_view missing_token = "NA") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open panel file " + path.string());
  return parse_panel(in, missing_token);
}

inline void write_panel(std::ostream& out, const ObservationPanel& panel,
                        std::string_view missing_token = "NA") {
  detail::check_token(missing_token);
  if (panel.n_units() == 0 || panel.n_times() == 0) {
    throw IoError("EmptyPanel: refusing to write a panel with no cells");
  }
  out << "# units=" << panel.n_units() << " times=" << panel.n_times() << '\n';
  for (std::size_t i = 0; i < panel.n_units(); ++i) {
    for (std::size_t t = 0; t < panel.n_times(); ++t) {
      if (t) out << ',';
      if (panel.observed(i, t)) {
        out << detail::format_double(panel.value(i, t));
      } else {
        out << missing_token;
      }
    }
    out << '\n';
  }
}

inline void save_panel(const ObservationPanel& panel,
                       const std::filesystem::path& path,
                       std::string_view missing_token = "NA") {
  detail::check_token(missing_token);
  if (panel.n_units() == 0 || panel.n_times() == 0) {
    throw IoError("EmptyPanel: refusing to write a panel with no cells");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_panel(out, panel, missing_token);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace drnn
