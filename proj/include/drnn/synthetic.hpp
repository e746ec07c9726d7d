#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "drnn/errors.hpp"
#include "drnn/panel.hpp"
#include "drnn/random.hpp"

namespace drnn {

// Rows are entities (units or times), columns are latent coordinates.
using FactorMatrix = RealMatrix;

enum class FactorKind { discrete, continuous };

inline const double kDefaultBoxHalfwidth = std::cbrt(2.0 / 3.0);

struct FactorConfig {
  FactorKind unit_kind = FactorKind::discrete;
  FactorKind time_kind = FactorKind::discrete;
  int d = 3;
  std::size_t m_unit = 5;
  std::size_t m_time = 5;
  double c = kDefaultBoxHalfwidth;
};

enum class NonlinearFn { shifted_sigmoid, additive_quadratic };

struct SurfaceConfig {
  enum class Kind { bilinear, nonlinear } kind = Kind::bilinear;
  NonlinearFn fn = NonlinearFn::shifted_sigmoid;
};

enum class NoiseKind { gaussian, truncated_gaussian, uniform };

inline FactorKind parse_factor_kind(std::string_view s) {
  if (s == "discrete") return FactorKind::discrete;
  if (s == "continuous") return FactorKind::continuous;
  throw ConfigError("unknown factor kind '" + std::string(s) + "'");
}

inline NonlinearFn parse_nonlinear_fn(std::string_view s) {
  if (s == "shifted-sigmoid") return NonlinearFn::shifted_sigmoid;
  if (s == "additive-quadratic") return NonlinearFn::additive_quadratic;
  throw ConfigError("unknown surface '" + std::string(s) + "'");
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "truncated_gaussian") return NoiseKind::truncated_gaussian;
  if (s == "uniform") return NoiseKind::uniform;
  throw ConfigError("unknown noise kind '" + std::string(s) + "'");
}

// n i.i.d. uniform draws from a seeded set of M distinct points of {-1,1}^d.
inline FactorMatrix gen_discrete_factors(std::size_t n, std::size_t m, int d,
                                         std::uint64_t seed) {
  if (d < 1 || d > 62) throw ConfigError("discrete factors need 1 <= d <= 62");
  if (m < 1) throw ConfigError("support size must be positive");
  if (m > (std::uint64_t{1} << d)) {
    throw ConfigError("support size M exceeds 2^d distinct sign vectors");
  }
  Rng rng = make_rng(derive_seed(seed, {tag64("support")}));
  std::uniform_int_distribution<std::uint64_t> code((0), (std::uint64_t{1} << d) - 1);
  std::set<std::uint64_t> chosen;
  std::vector<std::uint64_t> support;
  while (support.size() < m) {
    const auto x = code(rng);
    if (chosen.insert(x).second) support.push_back(x);
  }
  FactorMatrix out(n, static_cast<std::size_t>(d));
  std::uniform_int_distribution<std::size_t> atom(0, m - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = support[atom(rng)];
    for (int r = 0; r < d; ++r) out(k, static_cast<std::size_t>(r)) = ((x >> r) & 1U) ? 1.0 : -1.0;
  }
  return out;
}

// n i.i.d. uniform draws from the box [-c, c]^d.
inline FactorMatrix gen_continuous_factors(std::size_t n, int d,
                                           double c = kDefaultBoxHalfwidth,
                                           std::uint64_t seed = 0) {
  if (!(c > 0.0)) throw ConfigError("box half-width must be positive");
  if (d < 1) throw ConfigError("factor dimension must be positive");
  Rng rng = make_rng(derive_seed(seed, {tag64("box")}));
  std::uniform_real_distribution<double> unif(-c, c);
  FactorMatrix out(n, static_cast<std::size_t>(d));
  for (auto& x : out.flat()) x = unif(rng);
  return out;
}

inline double surface_value(std::span<const double> u, std::span<const double> v,
                            const SurfaceConfig& s) {
  double dot = 0.0;
  for (std::size_t r = 0; r < u.size(); ++r) dot += u[r] * v[r];
  if (s.kind == SurfaceConfig::Kind::bilinear) return dot;
  switch (s.fn) {
    case NonlinearFn::shifted_sigmoid:
      return 5.0 * std::tanh(dot);
    case NonlinearFn::additive_quadratic: {
      double uu = 0.0;
      double vv = 0.0;
      for (std::size_t r = 0; r < u.size(); ++r) {
        uu += u[r] * u[r];
        vv += v[r] * v[r];
      }
      return dot + 0.1 * (uu - vv);
    }
  }
  return dot;
}

inline RealMatrix build_theta(const FactorMatrix& units, const FactorMatrix& times,
                              const SurfaceConfig& surface = {}) {
  if (units.cols() != times.cols()) throw ConfigError("factor dimensions differ");
  RealMatrix theta(units.rows(), times.rows());
  for (std::size_t i = 0; i < units.rows(); ++i) {
    for (std::size_t t = 0; t < times.rows(); ++t) {
      theta(i, t) = surface_value(units.row(i), times.row(t), surface);
    }
  }
  return theta;
}

namespace detail {

inline double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Variance of a standard normal truncated to [-k, k].
inline double truncated_unit_variance(double k) {
  const double mass = 2.0 * std_normal_cdf(k) - 1.0;
  return 1.0 - 2.0 * k * std_normal_pdf(k) / mass;
}

// Scale s such that s * Z, Z standard normal truncated at +-bound/s, has
// variance sigma^2. Requires sigma^2 < bound^2 / 3.
inline double truncated_scale(double sigma, double bound) {
  const double target = (sigma * sigma) / (bound * bound);  // = v(k) / k^2
  double lo = 1e-3;
  double hi = 1.0;
  auto ratio = [](double k) { return truncated_unit_variance(k) / (k * k); };
  while (ratio(hi) > target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ratio(mid) > target ? lo : hi) = mid;
  }
  const double k = 0.5 * (lo + hi);
  return bound / k;
}

}  // namespace detail

// i.i.d. mean-zero noise with variance sigma^2. `bound` caps |eps| for the
// truncated and uniform kinds (non-positive means 5 sigma).
inline RealMatrix gen_noise(std::size_t rows, std::size_t cols, double sigma, NoiseKind kind,
                            double bound, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be nonnegative");
  RealMatrix out(rows, cols, 0.0);
  if (sigma == 0.0) return out;
  if (bound <= 0.0) bound = 5.0 * sigma;
  Rng rng = make_rng(derive_seed(seed, {tag64("noise")}));
  switch (kind) {
    case NoiseKind::gaussian: {
      std::normal_distribution<double> z(0.0, sigma);
      for (auto& x : out.flat()) x = z(rng);
      break;
    }
    case NoiseKind::uniform: {
      const double a = std::sqrt(3.0) * sigma;
      if (bound < a) {
        throw ConfigError("uniform noise with variance sigma^2 needs bound >= sqrt(3) sigma");
      }
      std::uniform_real_distribution<double> u(-a, a);
      for (auto& x : out.flat()) x = u(rng);
      break;
    }
    case NoiseKind::truncated_gaussian: {
      if (bound * bound <= 3.0 * sigma * sigma) {
        throw ConfigError("truncated noise with variance sigma^2 needs bound > sqrt(3) sigma");
      }
      const double s = detail::truncated_scale(sigma, bound);
      std::normal_distribution<double> z(0.0, 1.0);
      const double k = bound / s;
      for (auto& x : out.flat()) {
        double draw = z(rng);
        while (std::fabs(draw) > k) draw = z(rng);
        x = s * draw;
      }
      break;
    }
  }
  return out;
}

inline MaskMatrix gen_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("observation probability must lie in (0, 1]");
  MaskMatrix mask(rows, cols, 1);
  if (p == 1.0) return mask;
  Rng rng = make_rng(derive_seed(seed, {tag64("mask")}));
  std::bernoulli_distribution coin(p);
  for (auto& a : mask.flat()) a = coin(rng) ? 1 : 0;
  return mask;
}

struct InstanceConfig {
  std::size_t n_units = 100;
  std::size_t n_times = 100;
  FactorConfig factor;
  SurfaceConfig surface;
  double sigma = 0.5;
  NoiseKind noise_kind = NoiseKind::truncated_gaussian;
  double noise_bound = 0.0;  // <= 0: 5 sigma
  double p = 1.0;
  std::uint64_t seed = 0;
  // Replace unit 0's factor with (s, ..., s), far from every other unit.
  std::optional<double> outlier_unit_scale;
};

struct SyntheticInstance {
  RealMatrix theta;
  FactorMatrix unit_factors;
  FactorMatrix time_factors;
  RealMatrix noise;
  double noise_sigma = 0.0;
  double obs_prob = 1.0;
  ObservationPanel panel;
  InstanceConfig config;
};

inline FactorMatrix gen_factors(std::size_t n, FactorKind kind, std::size_t m, int d,
                                double c, std::uint64_t seed) {
  return kind == FactorKind::discrete ? gen_discrete_factors(n, m, d, seed)
                                      : gen_continuous_factors(n, d, c, seed);
}

// Factors, noise, and mask use disjoint sub-seeded streams, so changing p
// leaves the factors and the noise bit-identical.
inline SyntheticInstance gen_instance(const InstanceConfig& cfg) {
  if (cfg.n_units == 0 || cfg.n_times == 0) throw ConfigError("panel dimensions must be positive");
  SyntheticInstance inst;
  inst.config = cfg;
  inst.noise_sigma = cfg.sigma;
  inst.obs_prob = cfg.p;
  const auto& f = cfg.factor;
  inst.unit_factors = gen_factors(cfg.n_units, f.unit_kind, f.m_unit, f.d, f.c,
                                  derive_seed(cfg.seed, {tag64("unit-factors")}));
  inst.time_factors = gen_factors(cfg.n_times, f.time_kind, f.m_time, f.d, f.c,
                                  derive_seed(cfg.seed, {tag64("time-factors")}));
  if (cfg.outlier_unit_scale) {
    for (auto& x : inst.unit_factors.row(0)) x = *cfg.outlier_unit_scale;
  }
  inst.theta = build_theta(inst.unit_factors, inst.time_factors, cfg.surface);
  inst.noise = gen_noise(cfg.n_units, cfg.n_times, cfg.sigma, cfg.noise_kind, cfg.noise_bound,
                         derive_seed(cfg.seed, {tag64("noise")}));
  auto mask = gen_mask(cfg.n_units, cfg.n_times, cfg.p, derive_seed(cfg.seed, {tag64("mask")}));
  RealMatrix y = inst.theta;
  for (std::size_t k = 0; k < y.size(); ++k) y.flat()[k] += inst.noise.flat()[k];
  inst.panel = ObservationPanel(std::move(y), std::move(mask));
  return inst;
}

// Rank-d order-3 tensor: theta[i,t,a] = sum_r u[i,r] v[t,r] w[a,r].
struct TensorInstance {
  std::vector<double> theta;
  FactorMatrix unit_factors;
  FactorMatrix time_factors;
  FactorMatrix intervention_factors;
  ObservationTensor tensor;

  double truth(std::size_t i, std::size_t t, std::size_t a) const {
    return theta[tensor.index(i, t, a)];
  }
};

struct TensorInstanceConfig {
  std::size_t dims[3] = {50, 50, 50};
  FactorKind kind = FactorKind::discrete;
  int d = 3;
  std::size_t m = 5;  // discrete support size in every mode
  double c = kDefaultBoxHalfwidth;
  double sigma = 0.5;
  NoiseKind noise_kind = NoiseKind::truncated_gaussian;
  double noise_bound = 0.0;
  double p = 1.0;
  std::uint64_t seed = 0;
};

inline TensorInstance gen_tensor_instance(const TensorInstanceConfig& cfg) {
  TensorInstance inst;
  const char* tags[3] = {"tensor-unit", "tensor-time", "tensor-intervention"};
  FactorMatrix* out[3] = {&inst.unit_factors, &inst.time_factors, &inst.intervention_factors};
  for (int mode = 0; mode < 3; ++mode) {
    *out[mode] = gen_factors(cfg.dims[mode], cfg.kind, cfg.m, cfg.d, cfg.c,
                             derive_seed(cfg.seed, {tag64(tags[mode])}));
  }
  const auto n = cfg.dims[0];
  const auto t = cfg.dims[1];
  const auto m = cfg.dims[2];
  inst.theta.assign(n * t * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < t; ++s) {
      for (std::size_t a = 0; a < m; ++a) {
        double v = 0.0;
        for (int r = 0; r < cfg.d; ++r) {
          const auto rr = static_cast<std::size_t>(r);
          v += inst.unit_factors(i, rr) * inst.time_factors(s, rr) *
               inst.intervention_factors(a, rr);
        }
        inst.theta[(i * t + s) * m + a] = v;
      }
    }
  }
  const auto noise = gen_noise(n * t, m, cfg.sigma, cfg.noise_kind, cfg.noise_bound,
                               derive_seed(cfg.seed, {tag64("tensor-noise")}));
  const auto mask = gen_mask(n * t, m, cfg.p, derive_seed(cfg.seed, {tag64("tensor-mask")}));
  std::vector<double> y(inst.theta);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += noise.flat()[k];
  std::vector<std::uint8_t> a(mask.flat().begin(), mask.flat().end());
  inst.tensor = ObservationTensor(n, t, m, std::move(y), std::move(a));
  return inst;
}

}  // namespace drnn
