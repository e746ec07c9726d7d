#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include <unistd.h>

#include "drnn/drnn.hpp"

namespace testing {

inline drnn::RealMatrix matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const auto n = rows.size();
  const auto t = rows.begin()->size();
  drnn::RealMatrix m(n, t);
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t s = 0;
    for (double v : r) m(i, s++) = v;
    ++i;
  }
  return m;
}

inline drnn::MaskMatrix mask(std::initializer_list<std::initializer_list<int>> rows) {
  const auto n = rows.size();
  const auto t = rows.begin()->size();
  drnn::MaskMatrix m(n, t);
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t s = 0;
    for (int v : r) m(i, s++) = static_cast<std::uint8_t>(v);
    ++i;
  }
  return m;
}

inline drnn::ObservationPanel full(std::initializer_list<std::initializer_list<double>> rows) {
  return drnn::ObservationPanel::fully_observed(matrix(rows));
}

// Outer product of scalar factors: theta[i][t] = u[i] * v[t].
inline drnn::RealMatrix rank1(const std::vector<double>& u, const std::vector<double>& v) {
  drnn::RealMatrix m(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t t = 0; t < v.size(); ++t) m(i, t) = u[i] * v[t];
  }
  return m;
}

inline drnn::NeighborSets sets(drnn::TargetCell c, drnn::IndexSet units, drnn::IndexSet times) {
  drnn::NeighborSets s;
  s.target = c;
  s.unit_neighbors = std::move(units);
  s.time_neighbors = std::move(times);
  return s;
}

// Per-test scratch directory, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() /
              ("drnn_test_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
