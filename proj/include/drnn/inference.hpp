#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "drnn/errors.hpp"
#include "drnn/estimators.hpp"
#include "drnn/neighbors.hpp"
#include "drnn/validation.hpp"

namespace drnn {

// Inverse standard normal CDF, Wichura's AS241 (PPND16); about 1e-16
// relative accuracy over (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw InvalidArgument("normal_quantile needs p in [0, 1]");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double val = 0.0;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

// Upper alpha/2 critical value of the standard normal.
inline double z_critical(double alpha) { return normal_quantile(1.0 - alpha / 2.0); }

struct DenominatorCounts {
  std::size_t n_time = 0;   // a = sum_{t'} A[i,t']
  std::size_t n_unit = 0;   // b = sum_j A[j,t]
  std::size_t n_cross = 0;  // c = sum_{j,t'} A[i,t'] A[j,t'] A[j,t]
};

inline DenominatorCounts counts_of(const EntryEstimate& e) {
  return {e.n_time_used, e.n_unit_used, e.n_cross_terms};
}

// J = (1/a + 1/b + 1/c)^{-1}.
inline double effective_sample_size(std::size_t n_time_obs, std::size_t n_unit_obs,
                                    std::size_t n_cross_obs) {
  if (n_time_obs == 0 || n_unit_obs == 0 || n_cross_obs == 0) {
    throw DegenerateInterval("effective sample size needs three positive counts");
  }
  return 1.0 / (1.0 / static_cast<double>(n_time_obs) +
                1.0 / static_cast<double>(n_unit_obs) +
                1.0 / static_cast<double>(n_cross_obs));
}

struct IntervalEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;
  double j_eff = 0.0;
  double sigma_hat = 0.0;

  double width() const noexcept { return upper - lower; }
  bool covers(double x) const noexcept { return lower <= x && x <= upper; }
};

inline IntervalEstimate confidence_interval(double point, const DenominatorCounts& counts,
                                            double sigma_hat, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!(sigma_hat >= 0.0)) throw InvalidArgument("sigma_hat must be nonnegative");
  IntervalEstimate ci;
  ci.point = point;
  ci.alpha = alpha;
  ci.sigma_hat = sigma_hat;
  ci.j_eff = effective_sample_size(counts.n_time, counts.n_unit, counts.n_cross);
  const double half = z_critical(alpha) * sigma_hat / std::sqrt(ci.j_eff);
  ci.lower = point - half;
  ci.upper = point + half;
  return ci;
}

struct NoiseVarianceOptions {
  HoldoutOptions holdout;
  EstimateOptions estimate;
};

// sigma^2 as the smallest holdout MSE over the threshold grid.
inline double estimate_noise_variance(const ObservationPanel& panel,
                                      std::span<const Thresholds> grid, Method method,
                                      const NoiseVarianceOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  const auto plan = make_holdout(panel, opts.holdout);
  const Method methods[] = {method};
  const auto mse = holdout_mse(plan, grid, methods, opts.estimate);
  const double best = *std::min_element(mse[0].begin(), mse[0].end());
  if (!std::isfinite(best)) throw InsufficientData("no grid point produced an estimate");
  return std::max(0.0, best);
}

// Diagnostic alternative: rho_unit(i, j) concentrates around
// rho*(i, j) + 2 sigma^2, so half of a row's smallest finite distance is a
// rough sigma^2 estimate (biased low, being a minimum over noisy
// distances). Returns the median over rows.
inline double noise_variance_from_distances(const ObservationPanel& panel,
                                            std::size_t max_rows = 50,
                                            std::uint64_t seed = 0) {
  if (panel.n_units() < 2 || panel.n_times() < 2) {
    throw InsufficientData("need at least two units and two times");
  }
  std::vector<std::size_t> rows(panel.n_units());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Rng rng = make_rng(derive_seed(seed, {tag64("sigma-rows")}));
  std::shuffle(rows.begin(), rows.end(), rng);
  if (max_rows && rows.size() > max_rows) rows.resize(max_rows);
  std::vector<double> halves;
  for (auto i : rows) {
    // Use the last column as the excluded time so every other column counts.
    const std::size_t excluded = panel.n_times() - 1;
    const auto times = all_except(panel.n_times(), excluded);
    double best = kInf;
    for (std::size_t j = 0; j < panel.n_units(); ++j) {
      if (j == i) continue;
      best = std::min(best, unit_distance(panel, i, j, excluded, times));
    }
    if (best != kInf) halves.push_back(best / 2.0);
  }
  if (halves.empty()) throw InsufficientData("no pair of rows overlaps");
  auto mid = halves.begin() + static_cast<std::ptrdiff_t>(halves.size() / 2);
  std::nth_element(halves.begin(), mid, halves.end());
  return *mid;
}

}  // namespace drnn
