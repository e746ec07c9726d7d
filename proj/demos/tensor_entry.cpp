// Triply robust estimate of one hidden tensor entry.
#include <cstdio>

#include <drnn/drnn.hpp>

int main() {
  drnn::TensorInstanceConfig cfg;
  cfg.dims[0] = cfg.dims[1] = cfg.dims[2] = 30;
  cfg.m = 4;
  cfg.sigma = 0.3;
  cfg.seed = 7;
  const auto inst = drnn::gen_tensor_instance(cfg);

  const drnn::TensorCell c{3, 5, 8};
  const auto x = inst.tensor.with_hidden(c.unit, c.time, c.intervention);
  const double eta = 2 * cfg.sigma * cfg.sigma + 0.1;
  const auto sets = drnn::tensor_neighbors(x, c, {eta, eta, eta});
  const auto e = drnn::estimate_tr_nn(x, sets);
  std::printf("neighbors: %zu unit, %zu time, %zu intervention\n", sets.neighbors[0].size(),
              sets.neighbors[1].size(), sets.neighbors[2].size());
  std::printf("truth %.4f  estimate %.4f  (%zu terms)\n", inst.truth(c.unit, c.time, c.intervention),
              e.value, e.n_terms);
}
