// Simulate a noisy low-rank panel, hide a few cells, and compare the
// unit, time, and doubly robust estimates with 95% intervals.
#include <cmath>
#include <cstdio>
#include <vector>

#include <drnn/drnn.hpp>

int main() {
  drnn::InstanceConfig cfg;
  cfg.n_units = cfg.n_times = 200;
  cfg.p = 0.7;
  cfg.sigma = 0.5;
  cfg.seed = 42;
  cfg.factor.m_unit = cfg.factor.m_time = 5;
  const auto inst = drnn::gen_instance(cfg);

  const std::vector<drnn::TargetCell> cells = {{0, 0}, {17, 101}, {150, 3}, {199, 199}};
  const auto panel = inst.panel.with_hidden(cells);

  const double sigma_sq = cfg.sigma * cfg.sigma;
  const auto eta = drnn::theory_eta(panel.n_units(), panel.n_times(), drnn::mask_density(panel),
                                    sigma_sq, 1.0, 0.05, drnn::Regime::discrete());
  std::printf("eta1 = %.4f  eta2 = %.4f\n\n", eta.eta1, eta.eta2);
  std::printf("%5s %5s %9s %9s %9s %9s %21s\n", "i", "t", "truth", "unit", "time", "dr",
              "dr 95% interval");

  for (const auto& c : cells) {
    const auto unit = drnn::estimate_entry(panel, c, eta, drnn::Method::unit);
    const auto time = drnn::estimate_entry(panel, c, eta, drnn::Method::time);
    const auto dr = drnn::estimate_entry(panel, c, eta, drnn::Method::dr);
    const auto ci = drnn::confidence_interval(dr.value, drnn::counts_of(dr), std::sqrt(sigma_sq), 0.05);
    std::printf("%5zu %5zu %9.4f %9.4f %9.4f %9.4f   [%8.4f, %8.4f]\n", c.unit, c.time,
                inst.theta(c.unit, c.time), unit.value, time.value, dr.value, ci.lower, ci.upper);
  }
}
