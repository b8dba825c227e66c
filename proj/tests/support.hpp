// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "asvr/dataset.hpp"
#include "asvr/objective.hpp"

namespace asvr::testing {

inline std::shared_ptr<const SparseDataset> synthetic(std::size_t n, std::size_t d,
                                                      std::size_t nnz,
                                                      std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.n = n;
  spec.dim = d;
  spec.nnz_per_row = nnz;
  spec.seed = seed;
  return std::make_shared<const SparseDataset>(generate_synthetic(spec));
}

inline Problem small_problem(std::size_t n = 60, std::size_t d = 20,
                             std::size_t nnz = 4, std::uint64_t seed = 1) {
  auto data = synthetic(n, d, nnz, seed);
  const double lambda = 1.0 / static_cast<double>(n);
  return make_problem(data, lambda);
}

inline std::vector<double> random_point(std::size_t d, std::uint64_t seed,
                                        double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> x(d);
  for (double& v : x) v = g(rng);
  return x;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace asvr::testing
