// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "asvr/dataset.hpp"

namespace asvr {

/// l2-regularized logistic regression in support-split form:
///
///   f_i(x) = log(1 + exp(y_i z_i.x)) + lambda * sum_{j in e_i} x_j^2 / r_j
///
/// with r_j = d_j / n the column frequency. The exponent sign is y_i z_i.x
/// (not the more common -y_i z_i.x). The average f = (1/n) sum_i f_i equals
/// the loss average plus lambda * sum_{j: d_j > 0} x_j^2.
struct Problem {
  std::shared_ptr<const SparseDataset> data;
  /// Regularization weight lambda.
  double lambda = 0.0;
  /// Upper bound L on the Lipschitz constant of every component gradient.
  double smoothness = 0.0;
  /// Strong convexity modulus of the regularizer part: 2 * lambda.
  double strong_convexity = 0.0;
  /// 2 * lambda * n / d_j, zero for unused features.
  std::vector<double> reg_curvature;

  std::size_t n() const noexcept { return data->size(); }
  std::size_t dim() const noexcept { return data->dim(); }
};

/// Builds a Problem. L defaults to 0.25 + 2 lambda n max_{j: d_j>0} 1/d_j,
/// valid for unit-norm rows; `smoothness` overrides it (e.g. the bare 0.25).
Problem make_problem(std::shared_ptr<const SparseDataset> data, double lambda,
                     std::optional<double> smoothness = std::nullopt);

/// lambda such that L / (2 lambda) equals `condition` under the default L.
double lambda_for_condition(const SparseDataset& data, double condition);

/// Gradient of f_i restricted to its support e_i (zero elsewhere).
struct ComponentGradient {
  std::span<const FeatureId> support;
  std::vector<double> values;
};

double logistic(double u);
/// log(1 + exp(u)) without overflow.
double softplus(double u);

// Support-aligned kernels: `x_support[k]` is x at feature support[k].
double component_loss_on_support(const Problem& p, std::size_t i,
                                 std::span<const double> x_support);
void component_gradient_on_support(const Problem& p, std::size_t i,
                                   std::span<const double> x_support,
                                   std::span<double> out);

double component_loss(const Problem& p, std::size_t i,
                      std::span<const double> x);
ComponentGradient component_gradient(const Problem& p, std::size_t i,
                                     std::span<const double> x);

double full_objective(const Problem& p, std::span<const double> x);
std::vector<double> full_gradient(const Problem& p, std::span<const double> x);
/// Adds (1/n) * sum_{i in members} grad f_i(x) into `acc`.
void accumulate_mean_gradient(const Problem& p,
                              std::span<const std::size_t> members,
                              std::span<const double> x, std::span<double> acc);

/// Bregman divergence of f_S = (1/n) sum_{i in S} f_i:
/// f_S(x) - f_S(y) - <grad f_S(y), x - y>. An empty optional means S = [n].
double bregman(const Problem& p,
               const std::optional<std::vector<std::size_t>>& subset,
               std::span<const double> x, std::span<const double> y);

/// D_{f_i}(alpha, x_star) with alpha given only on e_i; f_i and its
/// gradient depend on nothing else.
double component_bregman_on_support(const Problem& p, std::size_t i,
                                    std::span<const double> alpha_support,
                                    std::span<const double> x_star);

/// G = (1/n) sum_{i in S} D_{f_i}(alpha_i, x_star); alphas[k] is the dense
/// anchor point of members[k].
double lyapunov_g(const Problem& p, std::span<const std::size_t> members,
                  std::span<const std::vector<double>> alphas,
                  std::span<const double> x_star);

double squared_norm(std::span<const double> v);

}  // namespace asvr
