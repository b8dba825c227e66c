// SPDX-License-Identifier: Apache-2.0
#include "asvr/objective.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "asvr/error.hpp"

namespace asvr {

namespace {

std::uint64_t min_positive_count(const SparseDataset& data) {
  std::uint64_t best = 0;
  for (std::uint64_t c : data.col_counts()) {
    if (c > 0 && (best == 0 || c < best)) best = c;
  }
  return best;
}

}  // namespace

Problem make_problem(std::shared_ptr<const SparseDataset> data, double lambda,
                     std::optional<double> smoothness) {
  if (!data) throw ConfigError("problem needs a dataset");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError(fmt::format("lambda must be positive, got {}", lambda));
  }
  Problem p;
  p.lambda = lambda;
  p.strong_convexity = 2.0 * lambda;
  p.reg_curvature.assign(data->dim(), 0.0);
  const auto counts = data->col_counts();
  const double n = static_cast<double>(data->size());
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] > 0) {
      p.reg_curvature[j] = 2.0 * lambda * n / static_cast<double>(counts[j]);
    }
  }
  const std::uint64_t dmin = min_positive_count(*data);
  const double default_l =
      0.25 + (dmin > 0 ? 2.0 * lambda * n / static_cast<double>(dmin) : 0.0);
  p.smoothness = smoothness.value_or(default_l);
  if (!(p.smoothness >= p.strong_convexity)) {
    throw ConfigError(fmt::format("smoothness L={} below strong convexity {}",
                                  p.smoothness, p.strong_convexity));
  }
  p.data = std::move(data);
  return p;
}

double lambda_for_condition(const SparseDataset& data, double condition) {
  const std::uint64_t dmin = std::max<std::uint64_t>(min_positive_count(data), 1);
  const double n = static_cast<double>(data.size());
  const double denom = 2.0 * condition - 2.0 * n / static_cast<double>(dmin);
  if (!(denom > 0.0)) {
    throw ConfigError(fmt::format("condition number {} not attainable", condition));
  }
  return 0.25 / denom;
}

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double softplus(double u) {
  if (u > 0.0) return u + std::log1p(std::exp(-u));
  return std::log1p(std::exp(u));
}

double component_loss_on_support(const Problem& p, std::size_t i,
                                 std::span<const double> x_support) {
  const ExampleView ex = p.data->example(i);
  double margin = 0.0;
  double reg = 0.0;
  for (std::size_t k = 0; k < ex.size(); ++k) {
    const double xj = x_support[k];
    margin += ex.values[k] * xj;
    reg += 0.5 * p.reg_curvature[ex.indices[k]] * xj * xj;
  }
  return softplus(ex.label * margin) + reg;
}

void component_gradient_on_support(const Problem& p, std::size_t i,
                                   std::span<const double> x_support,
                                   std::span<double> out) {
  const ExampleView ex = p.data->example(i);
  double margin = 0.0;
  for (std::size_t k = 0; k < ex.size(); ++k) margin += ex.values[k] * x_support[k];
  const double scale = logistic(ex.label * margin) * ex.label;
  for (std::size_t k = 0; k < ex.size(); ++k) {
    out[k] = scale * ex.values[k] +
             p.reg_curvature[ex.indices[k]] * x_support[k];
  }
}

namespace {

void gather(std::span<const FeatureId> support, std::span<const double> x,
            std::vector<double>& out) {
  out.resize(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) out[k] = x[support[k]];
}

}  // namespace

double component_loss(const Problem& p, std::size_t i,
                      std::span<const double> x) {
  std::vector<double> xs;
  gather(p.data->example(i).indices, x, xs);
  return component_loss_on_support(p, i, xs);
}

ComponentGradient component_gradient(const Problem& p, std::size_t i,
                                     std::span<const double> x) {
  const ExampleView ex = p.data->example(i);
  std::vector<double> xs;
  gather(ex.indices, x, xs);
  ComponentGradient g{ex.indices, std::vector<double>(ex.size())};
  component_gradient_on_support(p, i, xs, g.values);
  return g;
}

double full_objective(const Problem& p, std::span<const double> x) {
  double total = 0.0;
  std::vector<double> xs;
  for (std::size_t i = 0; i < p.n(); ++i) {
    gather(p.data->example(i).indices, x, xs);
    total += component_loss_on_support(p, i, xs);
  }
  return total / static_cast<double>(p.n());
}

void accumulate_mean_gradient(const Problem& p,
                              std::span<const std::size_t> members,
                              std::span<const double> x,
                              std::span<double> acc) {
  std::vector<double> sum(p.dim(), 0.0);
  std::vector<double> xs;
  std::vector<double> g;
  for (std::size_t i : members) {
    const ExampleView ex = p.data->example(i);
    gather(ex.indices, x, xs);
    g.resize(ex.size());
    component_gradient_on_support(p, i, xs, g);
    for (std::size_t k = 0; k < ex.size(); ++k) sum[ex.indices[k]] += g[k];
  }
  const double n = static_cast<double>(p.n());
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += sum[j] / n;
}

std::vector<double> full_gradient(const Problem& p, std::span<const double> x) {
  std::vector<std::size_t> all(p.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<double> out(p.dim(), 0.0);
  accumulate_mean_gradient(p, all, x, out);
  return out;
}

double component_bregman_on_support(const Problem& p, std::size_t i,
                                    std::span<const double> alpha_support,
                                    std::span<const double> x_star) {
  const ExampleView ex = p.data->example(i);
  std::vector<double> xs;
  gather(ex.indices, x_star, xs);
  std::vector<double> g(ex.size());
  component_gradient_on_support(p, i, xs, g);
  double inner = 0.0;
  for (std::size_t k = 0; k < ex.size(); ++k) {
    inner += g[k] * (alpha_support[k] - xs[k]);
  }
  return component_loss_on_support(p, i, alpha_support) -
         component_loss_on_support(p, i, xs) - inner;
}

double bregman(const Problem& p,
               const std::optional<std::vector<std::size_t>>& subset,
               std::span<const double> x, std::span<const double> y) {
  auto term = [&](std::size_t i) {
    std::vector<double> xs;
    gather(p.data->example(i).indices, x, xs);
    return component_bregman_on_support(p, i, xs, y);
  };
  double total = 0.0;
  if (subset) {
    for (std::size_t i : *subset) total += term(i);
  } else {
    for (std::size_t i = 0; i < p.n(); ++i) total += term(i);
  }
  return total / static_cast<double>(p.n());
}

double lyapunov_g(const Problem& p, std::span<const std::size_t> members,
                  std::span<const std::vector<double>> alphas,
                  std::span<const double> x_star) {
  double total = 0.0;
  std::vector<double> as;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const std::size_t i = members[k];
    gather(p.data->example(i).indices, alphas[k], as);
    total += component_bregman_on_support(p, i, as, x_star);
  }
  return total / static_cast<double>(p.n());
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return s;
}

}  // namespace asvr
