#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "support.hpp"

using namespace drnn;
using Catch::Approx;

namespace {

std::vector<double> row_of(const FactorMatrix& f, std::size_t k) {
  const auto r = f.row(k);
  return {r.begin(), r.end()};
}

}  // namespace

TEST_CASE("singleton support gives identical factors", "[synthetic]") {
  const auto f = gen_discrete_factors(50, 1, 4, 3);
  for (std::size_t k = 1; k < 50; ++k) CHECK(row_of(f, k) == row_of(f, 0));
  for (double x : f.flat()) CHECK(std::fabs(x) == 1.0);
}

TEST_CASE("support larger than the hypercube is rejected", "[synthetic]") {
  CHECK_THROWS_AS(gen_discrete_factors(10, 9, 3, 0), ConfigError);
  CHECK_NOTHROW(gen_discrete_factors(10, 8, 3, 0));
  CHECK_THROWS_AS(gen_discrete_factors(10, 0, 3, 0), ConfigError);
}

TEST_CASE("discrete atoms appear with binomial frequencies", "[synthetic]") {
  const std::size_t n = 2000;
  const auto f = gen_discrete_factors(n, 5, 3, 12);
  std::map<std::vector<double>, std::size_t> counts;
  for (std::size_t k = 0; k < n; ++k) ++counts[row_of(f, k)];
  REQUIRE(counts.size() == 5);
  const double sd = std::sqrt(n * 0.2 * 0.8);
  for (const auto& [atom, c] : counts) {
    CHECK(std::fabs(static_cast<double>(c) - n * 0.2) <= 5 * sd);
  }
  CHECK(gen_discrete_factors(n, 5, 3, 12) == f);
}

TEST_CASE("continuous factors lie in the box with centred means", "[synthetic]") {
  CHECK(kDefaultBoxHalfwidth == Approx(0.87358).margin(5e-6));
  const std::size_t n = 5000;
  const double c = kDefaultBoxHalfwidth;
  const auto f = gen_continuous_factors(n, 4, c, 7);
  for (double x : f.flat()) {
    CHECK(x >= -c);
    CHECK(x <= c);
  }
  const double sd = c / std::sqrt(3.0);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean += f(k, r);
    mean /= n;
    CHECK(std::fabs(mean) <= 5 * sd / std::sqrt(static_cast<double>(n)));
  }
  CHECK(gen_continuous_factors(n, 4, c, 7) == f);
  CHECK_THROWS_AS(gen_continuous_factors(3, 2, 0.0, 1), ConfigError);
}

TEST_CASE("bilinear and catalog surfaces", "[synthetic]") {
  FactorMatrix u(2, 3, 0.0);
  FactorMatrix v(2, 3, 0.0);
  u(0, 0) = 1;
  v(0, 0) = 1;
  u(1, 1) = 2;
  v(1, 2) = -4;
  const auto theta = build_theta(u, v);
  CHECK(theta(0, 0) == 1.0);
  CHECK(theta(1, 1) == 0.0);
  CHECK(theta(0, 1) == 0.0);

  SurfaceConfig sig{SurfaceConfig::Kind::nonlinear, NonlinearFn::shifted_sigmoid};
  const double zero[] = {0.0, 0.0};
  CHECK(surface_value(zero, zero, sig) == 0.0);
  const double a[] = {0.3, -0.2};
  const double b[] = {1.0, 0.5};
  CHECK(surface_value(a, b, sig) == Approx(5.0 * std::tanh(0.2)));
  SurfaceConfig quad{SurfaceConfig::Kind::nonlinear, NonlinearFn::additive_quadratic};
  CHECK(surface_value(a, b, quad) == Approx(0.2 + 0.1 * (0.13 - 1.25)));

  CHECK_THROWS_AS(build_theta(FactorMatrix(2, 3), FactorMatrix(2, 2)), ConfigError);
  CHECK(parse_nonlinear_fn("additive-quadratic") == NonlinearFn::additive_quadratic);
  CHECK_THROWS_AS(parse_nonlinear_fn("cubic"), ConfigError);
  CHECK_THROWS_AS(parse_noise_kind("cauchy"), ConfigError);
  CHECK_THROWS_AS(parse_factor_kind("mixed"), ConfigError);
}

TEST_CASE("zero sigma gives zero noise", "[synthetic]") {
  for (auto kind : {NoiseKind::gaussian, NoiseKind::uniform, NoiseKind::truncated_gaussian}) {
    const auto e = gen_noise(4, 5, 0.0, kind, 0.0, 1);
    for (double x : e.flat()) CHECK(x == 0.0);
  }
  CHECK_THROWS_AS(gen_noise(2, 2, -1.0, NoiseKind::gaussian, 0.0, 1), ConfigError);
}

TEST_CASE("uniform noise has variance sigma^2", "[synthetic]") {
  const double sigma = 0.7;
  const auto e = gen_noise(1000, 1000, sigma, NoiseKind::uniform, 0.0, 5);
  double m = 0.0;
  double s = 0.0;
  for (double x : e.flat()) m += x;
  m /= 1e6;
  for (double x : e.flat()) s += (x - m) * (x - m);
  s /= 1e6;
  CHECK(std::fabs(s - sigma * sigma) <= 0.01 * sigma * sigma);
  CHECK_THROWS_AS(gen_noise(2, 2, 1.0, NoiseKind::uniform, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(gen_noise(2, 2, 1.0, NoiseKind::uniform, 0.9, 1), ConfigError);
}

TEST_CASE("truncated gaussian noise respects its bound and variance", "[synthetic]") {
  for (double bound : {1.8, 2.5, 5.0}) {
    const double sigma = 1.0;
    const double s = detail::truncated_scale(sigma, bound);
    const double k = bound / s;
    // Closed-form variance of the rescaled truncated normal.
    CHECK(std::fabs(s * s * detail::truncated_unit_variance(k) - sigma * sigma) <= 1e-6);
    const auto e = gen_noise(500, 500, sigma, NoiseKind::truncated_gaussian, bound, 9);
    double m2 = 0.0;
    for (double x : e.flat()) {
      CHECK(std::fabs(x) <= bound);
      m2 += x * x;
    }
    CHECK(m2 / 250000.0 == Approx(1.0).epsilon(0.02));
  }
  CHECK_THROWS_AS(gen_noise(2, 2, 1.0, NoiseKind::truncated_gaussian, 1.7, 1), ConfigError);
}

TEST_CASE("mask density", "[synthetic]") {
  const auto full = gen_mask(20, 30, 1.0, 4);
  for (auto a : full.flat()) CHECK(a == 1);
  const double p = 0.3;
  const auto m = gen_mask(500, 500, p, 8);
  double ones = 0.0;
  for (auto a : m.flat()) ones += a;
  CHECK(std::fabs(ones / 250000.0 - p) <= 5 * std::sqrt(p * (1 - p) / 250000.0));
  CHECK(gen_mask(500, 500, p, 8) == m);
  CHECK_THROWS_AS(gen_mask(2, 2, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(gen_mask(2, 2, -0.5, 1), ConfigError);
  CHECK_THROWS_AS(gen_mask(2, 2, 1.5, 1), ConfigError);
}

TEST_CASE("instance composition", "[synthetic]") {
  InstanceConfig cfg;
  cfg.n_units = 40;
  cfg.n_times = 30;
  cfg.sigma = 0.0;
  cfg.seed = 3;
  const auto clean = gen_instance(cfg);
  CHECK(clean.panel.observed_count() == 1200);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t t = 0; t < 30; ++t) CHECK(clean.panel.value(i, t) == clean.theta(i, t));
  }

  cfg.sigma = 0.5;
  cfg.p = 0.6;
  const auto a = gen_instance(cfg);
  const auto b = gen_instance(cfg);
  CHECK(a.panel == b.panel);
  CHECK(a.theta == b.theta);
  CHECK(a.noise == b.noise);

  cfg.p = 0.9;
  const auto c = gen_instance(cfg);
  CHECK(c.unit_factors == a.unit_factors);
  CHECK(c.time_factors == a.time_factors);
  CHECK(c.noise == a.noise);
  CHECK_FALSE(c.panel.mask() == a.panel.mask());

  cfg.factor.m_unit = 1;
  cfg.sigma = 0.0;
  cfg.p = 1.0;
  const auto flat = gen_instance(cfg);
  for (std::size_t i = 1; i < 40; ++i) {
    for (std::size_t t = 0; t < 30; ++t) CHECK(flat.theta(i, t) == flat.theta(0, t));
  }

  cfg.outlier_unit_scale = 3.0;
  const auto out = gen_instance(cfg);
  for (double x : out.unit_factors.row(0)) CHECK(x == 3.0);
  CHECK(row_of(out.unit_factors, 1) == row_of(flat.unit_factors, 1));
}

TEST_CASE("discrete units have many exact-duplicate peers", "[synthetic]") {
  const std::size_t n = 2000;
  const std::size_t m = 5;
  int good = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = gen_discrete_factors(n, m, 3, derive_seed(seed, {tag64("abundance")}));
    std::map<std::vector<double>, std::size_t> counts;
    for (std::size_t k = 0; k < n; ++k) ++counts[row_of(f, k)];
    std::size_t fewest = n;
    for (const auto& [atom, c] : counts) fewest = std::min(fewest, c);
    if (fewest - 1 >= n / (2 * m)) ++good;
  }
  CHECK(good >= 95);
}

TEST_CASE("bilinear unit distances dominate the time second-moment bound", "[synthetic]") {
  InstanceConfig cfg;
  cfg.n_units = 60;
  cfg.n_times = 200;
  cfg.factor.unit_kind = cfg.factor.time_kind = FactorKind::continuous;
  cfg.factor.d = 4;
  cfg.sigma = 0.0;
  cfg.seed = 21;
  const auto inst = gen_instance(cfg);
  const auto& v = inst.time_factors;
  Eigen::MatrixXd sigma_time = Eigen::MatrixXd::Zero(4, 4);
  for (std::size_t t = 0; t < v.rows(); ++t) {
    Eigen::Vector4d x;
    for (int r = 0; r < 4; ++r) x[r] = v(t, static_cast<std::size_t>(r));
    sigma_time += x * x.transpose();
  }
  sigma_time /= static_cast<double>(v.rows());
  const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sigma_time).eigenvalues()[0];
  REQUIRE(lambda_min > 0.0);

  Rng rng = make_rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.n_units - 1);
  for (int k = 0; k < 1000; ++k) {
    const auto i = pick(rng);
    auto j = pick(rng);
    if (j == i) j = (i + 1) % cfg.n_units;
    double rho = 0.0;
    for (std::size_t t = 0; t < cfg.n_times; ++t) {
      const double diff = inst.theta(i, t) - inst.theta(j, t);
      rho += diff * diff;
    }
    rho /= static_cast<double>(cfg.n_times);
    double dist2 = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
      const double diff = inst.unit_factors(i, r) - inst.unit_factors(j, r);
      dist2 += diff * diff;
    }
    CHECK(rho >= lambda_min * dist2 * (1.0 - 1e-12));
  }
}

TEST_CASE("tensor instances", "[synthetic][tensor]") {
  TensorInstanceConfig cfg;
  cfg.dims[0] = 6;
  cfg.dims[1] = 5;
  cfg.dims[2] = 4;
  cfg.sigma = 0.0;
  cfg.seed = 2;
  const auto t = gen_tensor_instance(cfg);
  CHECK(t.tensor.n_units() == 6);
  CHECK(t.tensor.n_interventions() == 4);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t s = 0; s < 5; ++s) {
      for (std::size_t a = 0; a < 4; ++a) {
        double v = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
          v += t.unit_factors(i, r) * t.time_factors(s, r) * t.intervention_factors(a, r);
        }
        CHECK(t.truth(i, s, a) == v);
        CHECK(t.tensor.value(i, s, a) == v);
      }
    }
  }
}
