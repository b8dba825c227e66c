// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "asvr/error.hpp"
#include "asvr/objective.hpp"
#include "support.hpp"

namespace asvr {
namespace {

using testing::random_point;

TEST(Scalar, LogisticAndSoftplusAreStable) {
  EXPECT_DOUBLE_EQ(logistic(0.0), 0.5);
  EXPECT_EQ(logistic(-1000.0), 0.0);
  EXPECT_EQ(logistic(1000.0), 1.0);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1.0);
  EXPECT_NEAR(softplus(-40.0), std::exp(-40.0), 1e-30);
}

TEST(Problem, DefaultSmoothnessAndStrongConvexity) {
  auto data = testing::synthetic(100, 20, 4);
  const Problem p = make_problem(data, 0.01);
  EXPECT_DOUBLE_EQ(p.strong_convexity, 0.02);
  std::uint64_t dmin = ~0ull;
  for (auto c : data->col_counts()) dmin = std::min(dmin, c);
  EXPECT_DOUBLE_EQ(p.smoothness, 0.25 + 2.0 * 0.01 * 100.0 / static_cast<double>(dmin));
  const Problem q = make_problem(data, 0.01, 0.25);
  EXPECT_DOUBLE_EQ(q.smoothness, 0.25);
  EXPECT_THROW(make_problem(data, 0.0), ConfigError);
  EXPECT_THROW(make_problem(data, 1.0, 0.1), ConfigError);
}

TEST(Problem, LambdaForConditionHitsTheRequestedRatio) {
  auto data = testing::synthetic(1000, 100, 10);
  const double lambda = lambda_for_condition(*data, 1000.0);
  const Problem p = make_problem(data, lambda);
  EXPECT_NEAR(p.smoothness / p.strong_convexity, 1000.0, 1e-9);
}

TEST(Gradient, MatchesCentralDifferences) {
  const Problem p = testing::small_problem(50, 20, 5);
  std::mt19937_64 rng(3);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t i = rng() % p.n();
    std::vector<double> x = random_point(p.dim(), 100 + trial);
    const ComponentGradient g = component_gradient(p, i, x);
    for (std::size_t k = 0; k < g.support.size(); ++k) {
      const FeatureId j = g.support[k];
      const double keep = x[j];
      x[j] = keep + h;
      const double up = component_loss(p, i, x);
      x[j] = keep - h;
      const double down = component_loss(p, i, x);
      x[j] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_LE(std::abs(fd - g.values[k]), 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Gradient, FullGradientIsTheComponentAverage) {
  const Problem p = testing::small_problem();
  const auto x = random_point(p.dim(), 4);
  std::vector<double> avg(p.dim(), 0.0);
  for (std::size_t i = 0; i < p.n(); ++i) {
    const ComponentGradient g = component_gradient(p, i, x);
    for (std::size_t k = 0; k < g.support.size(); ++k) {
      avg[g.support[k]] += g.values[k] / static_cast<double>(p.n());
    }
  }
  EXPECT_LE(testing::max_abs_diff(avg, full_gradient(p, x)), 1e-14);
}

TEST(Regularizer, SplitSumEqualsTheFullRidgeTerm) {
  const Problem p = testing::small_problem(80, 30, 4);
  const auto x = random_point(p.dim(), 6);
  double split = 0.0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const ExampleView ex = p.data->example(i);
    for (FeatureId j : ex.indices) {
      split += p.lambda * x[j] * x[j] * static_cast<double>(p.n()) /
               static_cast<double>(p.data->col_counts()[j]);
    }
  }
  double ridge = 0.0;
  for (std::size_t j = 0; j < p.dim(); ++j) {
    if (p.data->col_counts()[j] > 0) ridge += x[j] * x[j];
  }
  EXPECT_NEAR(split, static_cast<double>(p.n()) * p.lambda * ridge, 1e-12 * split);

  // f = mean loss + lambda ||x||^2.
  double loss = 0.0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    const ExampleView ex = p.data->example(i);
    double margin = 0.0;
    for (std::size_t k = 0; k < ex.size(); ++k) margin += ex.values[k] * x[ex.indices[k]];
    loss += std::log1p(std::exp(ex.label * margin));
  }
  loss /= static_cast<double>(p.n());
  EXPECT_NEAR(full_objective(p, x), loss + p.lambda * ridge, 1e-12);
}

TEST(Regularizer, StrongConvexityWitness) {
  const Problem p = testing::small_problem();
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_point(p.dim(), 200 + trial);
    const auto y = random_point(p.dim(), 300 + trial);
    const auto gy = full_gradient(p, y);
    double inner = 0.0;
    double dist = 0.0;
    for (std::size_t j = 0; j < p.dim(); ++j) {
      inner += gy[j] * (x[j] - y[j]);
      dist += (x[j] - y[j]) * (x[j] - y[j]);
    }
    EXPECT_GE(full_objective(p, x) - full_objective(p, y) - inner,
              (p.strong_convexity / 2 - 1e-9) * dist);
  }
}

TEST(Regularizer, ComponentGradientsAreLSmooth) {
  const Problem p = testing::small_problem();
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t i = rng() % p.n();
    const auto x = random_point(p.dim(), 400 + trial);
    const auto y = random_point(p.dim(), 500 + trial);
    const ComponentGradient gx = component_gradient(p, i, x);
    const ComponentGradient gy = component_gradient(p, i, y);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < gx.support.size(); ++k) {
      num += (gx.values[k] - gy.values[k]) * (gx.values[k] - gy.values[k]);
      const FeatureId j = gx.support[k];
      den += (x[j] - y[j]) * (x[j] - y[j]);
    }
    EXPECT_LE(std::sqrt(num), p.smoothness * std::sqrt(den) + 1e-12);
  }
}

TEST(Bregman, IsNonNegativeAndZeroOnTheDiagonal) {
  const Problem p = testing::small_problem();
  const auto x = random_point(p.dim(), 1);
  const auto y = random_point(p.dim(), 2);
  EXPECT_GE(bregman(p, std::nullopt, x, y), 0.0);
  EXPECT_NEAR(bregman(p, std::nullopt, x, x), 0.0, 1e-15);
  std::vector<std::size_t> half;
  for (std::size_t i = 0; i < p.n(); i += 2) half.push_back(i);
  EXPECT_GE(bregman(p, half, x, y), 0.0);
}

TEST(Bregman, LyapunovTermAveragesComponentDivergences) {
  const Problem p = testing::small_problem();
  const auto star = random_point(p.dim(), 9);
  std::vector<std::size_t> members{1, 4, 7};
  std::vector<std::vector<double>> alphas;
  double expect = 0.0;
  for (std::size_t idx = 0; idx < members.size(); ++idx) {
    alphas.push_back(random_point(p.dim(), 20 + idx));
    const std::size_t i = members[idx];
    const ComponentGradient g = component_gradient(p, i, star);
    double lin = 0.0;
    for (std::size_t k = 0; k < g.support.size(); ++k) {
      lin += g.values[k] * (alphas.back()[g.support[k]] - star[g.support[k]]);
    }
    expect += component_loss(p, i, alphas.back()) - component_loss(p, i, star) - lin;
  }
  expect /= static_cast<double>(p.n());
  EXPECT_NEAR(lyapunov_g(p, members, alphas, star), expect, 1e-14);
}

}  // namespace
}  // namespace asvr
