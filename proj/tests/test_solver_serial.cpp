// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "asvr/error.hpp"
#include "asvr/solver.hpp"
#include "support.hpp"

namespace asvr {
namespace {

using testing::max_abs_diff;

SolverConfig config(ScheduleSpec spec, double eta, std::uint64_t epochs,
                    PickRule pick = PickRule::last(), std::uint64_t seed = 3) {
  SolverConfig c;
  c.eta = eta;
  c.epochs = epochs;
  c.schedule = std::move(spec);
  c.pick = pick;
  c.seed = seed;
  return c;
}

// Plain dense loop of the generic method, one schedule at a time.
std::vector<double> reference_loop(const Problem& p, ScheduleKind kind, double eta,
                                   std::uint64_t m, std::uint64_t steps,
                                   std::uint64_t seed) {
  const std::size_t n = p.n();
  const std::size_t d = p.dim();
  std::vector<double> x(d, 0.0);
  auto rng = rng::index_stream(seed, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::vector<double>> table(n, std::vector<double>(d, 0.0));
  std::vector<double> mean(d, 0.0);
  std::vector<double> snap = x;
  auto dense = [&](std::size_t i, const std::vector<double>& at) {
    std::vector<double> g(d, 0.0);
    const ComponentGradient c = component_gradient(p, i, at);
    for (std::size_t k = 0; k < c.support.size(); ++k) g[c.support[k]] = c.values[k];
    return g;
  };
  for (std::size_t i = 0; i < n; ++i) {
    table[i] = dense(i, x);
    for (std::size_t j = 0; j < d; ++j) mean[j] += table[i][j] / static_cast<double>(n);
  }
  for (std::uint64_t t = 0; t < steps; ++t) {
    if ((kind == ScheduleKind::svrg && t % m == 0) || kind == ScheduleKind::gd) {
      snap = x;
      mean = full_gradient(p, x);
    }
    const std::size_t i = pick(rng);
    const std::vector<double> g = dense(i, x);
    std::vector<double> dir(d);
    switch (kind) {
      case ScheduleKind::svrg:
      case ScheduleKind::gd: {
        const std::vector<double> a = dense(i, snap);
        for (std::size_t j = 0; j < d; ++j) dir[j] = g[j] - a[j] + mean[j];
        break;
      }
      case ScheduleKind::saga:
        for (std::size_t j = 0; j < d; ++j) dir[j] = g[j] - table[i][j] + mean[j];
        break;
      case ScheduleKind::sag:
        for (std::size_t j = 0; j < d; ++j) {
          mean[j] += (g[j] - table[i][j]) / static_cast<double>(n);
          table[i][j] = g[j];
          dir[j] = mean[j];
        }
        break;
      case ScheduleKind::hsag: break;
    }
    if (kind == ScheduleKind::saga) {
      for (std::size_t j = 0; j < d; ++j) {
        mean[j] += (g[j] - table[i][j]) / static_cast<double>(n);
        table[i][j] = g[j];
      }
    }
    for (std::size_t j = 0; j < d; ++j) x[j] -= eta * dir[j];
  }
  return x;
}

TEST(Pick, GeometricProbabilitiesFollowThePrintedRatio) {
  const auto p = pick_probabilities(PickRule::geometric(5.0), 6);
  ASSERT_EQ(p.size(), 6u);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
  for (std::size_t r = 0; r + 1 < p.size(); ++r) EXPECT_NEAR(p[r] / p[r + 1], 0.8, 1e-14);
  const auto u = pick_probabilities(PickRule::uniform(), 4);
  EXPECT_EQ(u, std::vector<double>(4, 0.25));
  EXPECT_TRUE(pick_probabilities(PickRule::last(), 4).empty());
}

TEST(Config, ValidateRejectsBadSettings) {
  const Problem p = testing::small_problem();
  EXPECT_THROW(config(ScheduleSpec::svrg(10), 0.0, 1).validate(p), ConfigError);
  EXPECT_THROW(config(ScheduleSpec::svrg(10), 0.1, 1, PickRule::geometric(1.0)).validate(p),
               ConfigError);
  SolverConfig lazy_saga = config(ScheduleSpec::saga(10), 0.1, 1);
  lazy_saga.jit = true;
  EXPECT_THROW(lazy_saga.validate(p), ConfigError);
  EXPECT_THROW(SerialSolver(p, lazy_saga, std::vector<double>(p.dim())), ConfigError);
}

TEST(Serial, FirstStepIsAFullGradientStep) {
  const Problem p = testing::small_problem();
  const std::vector<double> x0(p.dim(), 0.0);
  for (const ScheduleSpec& spec : {ScheduleSpec::svrg(10), ScheduleSpec::saga(10)}) {
    const double eta = 0.5;
    SerialSolver s(p, config(spec, eta, 1), x0);
    s.advance(1);
    const auto g = full_gradient(p, x0);
    const auto x1 = s.iterate();
    for (std::size_t j = 0; j < p.dim(); ++j) EXPECT_NEAR(x1[j], -eta * g[j], 1e-15);
  }
}

TEST(Serial, MatchesADenseReferenceLoop) {
  const Problem p = testing::small_problem(40, 12, 3);
  const double eta = 0.3 / p.smoothness;
  const std::uint64_t m = 25;
  for (ScheduleKind kind : {ScheduleKind::svrg, ScheduleKind::saga, ScheduleKind::sag,
                            ScheduleKind::gd}) {
    ScheduleSpec spec{kind, m, {}, {}};
    const auto r = solve(p, config(spec, eta, 3, PickRule::last(), 9),
                         std::vector<double>(p.dim(), 0.0));
    const auto expect = reference_loop(p, kind, eta, m, 3 * m, 9);
    EXPECT_LE(max_abs_diff(r.x, expect), 1e-12) << to_string(kind);
  }
}

TEST(Serial, SameSeedGivesIdenticalTraces) {
  const Problem p = testing::small_problem();
  const auto cfg = config(ScheduleSpec::saga(60), 0.2, 4, PickRule::geometric(50.0), 11);
  const auto a = solve(p, cfg, std::vector<double>(p.dim(), 0.0));
  const auto b = solve(p, cfg, std::vector<double>(p.dim(), 0.0));
  ASSERT_EQ(a.trace.rows.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a.trace.rows[k].objective, b.trace.rows[k].objective);
  }
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.trace.metadata.at("schedule"), "saga");
}

TEST(Serial, HsagWithEverythingInTheSetIsSaga) {
  const Problem p = testing::small_problem(80, 20, 4);
  const std::uint64_t m = 100;
  const auto pick = PickRule::geometric(60.0);
  SerialSolver saga(p, config(ScheduleSpec::saga(m), 0.3, 3, pick), std::vector<double>(p.dim()));
  SerialSolver hsag(p,
                    config(ScheduleSpec::hsag(m, std::vector<bool>(p.n(), true), m), 0.3, 3,
                           pick),
                    std::vector<double>(p.dim()));
  for (int k = 0; k < 3; ++k) {
    const EpochResult a = saga.run_epoch();
    const EpochResult b = hsag.run_epoch();
    EXPECT_EQ(a.x_tilde, b.x_tilde);
    EXPECT_EQ(a.x_last, b.x_last);
  }
}

TEST(Serial, HsagWithAnEmptySetIsSvrg) {
  const Problem p = testing::small_problem(80, 20, 4);
  const std::uint64_t m = 100;
  const auto pick = PickRule::uniform();
  SerialSolver svrg(p, config(ScheduleSpec::svrg(m), 0.3, 3, pick), std::vector<double>(p.dim()));
  SerialSolver hsag(p,
                    config(ScheduleSpec::hsag(m, std::vector<bool>(p.n(), false), m), 0.3, 3,
                           pick),
                    std::vector<double>(p.dim()));
  for (int k = 0; k < 3; ++k) {
    const EpochResult a = svrg.run_epoch();
    const EpochResult b = hsag.run_epoch();
    EXPECT_EQ(a.x_tilde, b.x_tilde);
    EXPECT_EQ(a.x_last, b.x_last);
  }
}

TEST(Jit, MaterializeCombinesBothBrackets) {
  JitState js;
  js.bracket1 = {1.0, 2.0, 3.0};
  js.base_step = 3;
  js.eta = 0.5;
  const std::vector<double> mean{0.2, -0.4, 1.0};
  const std::vector<FeatureId> coords{0, 1};
  const auto x = jit_materialize(js, mean, 5, coords);
  ASSERT_EQ(x.size(), 2u);
  EXPECT_DOUBLE_EQ(x[0], 0.8);
  EXPECT_DOUBLE_EQ(x[1], 2.4);
  EXPECT_EQ(jit_materialize(js, {}, 9, coords)[1], 2.0);
}

TEST(Jit, SingleStepTouchesOnlyTheSupportBracket) {
  const Problem p = testing::small_problem();
  SolverConfig cfg = config(ScheduleSpec::svrg(20), 0.4, 1);
  cfg.jit = true;
  SerialSolver lazy(p, cfg, std::vector<double>(p.dim(), 0.0));
  cfg.jit = false;
  SerialSolver dense(p, cfg, std::vector<double>(p.dim(), 0.0));
  lazy.advance(1);
  dense.advance(1);
  const JitState* js = lazy.jit_state();
  ASSERT_NE(js, nullptr);
  EXPECT_EQ(js->base_step, 0u);
  // The step was a pure mean step, so the first bracket is still x0.
  for (double v : js->bracket1) EXPECT_EQ(v, 0.0);
  EXPECT_LE(max_abs_diff(lazy.iterate(), dense.iterate()), 1e-15);
}

TEST(Jit, LazyAndDenseIteratesAgree) {
  auto data = testing::synthetic(500, 100, 10, 2);
  const Problem p = make_problem(data, 1.0 / 500.0);
  const std::uint64_t m = 1000;
  for (const ScheduleSpec& spec :
       {ScheduleSpec::svrg(m), ScheduleSpec::hsag_random(m, p.n(), 0.3, 5, m)}) {
    SolverConfig cfg = config(spec, 0.1 / p.smoothness, 3, PickRule::uniform(), 4);
    const auto dense = solve(p, cfg, std::vector<double>(p.dim(), 0.0));
    cfg.jit = true;
    const auto lazy = solve(p, cfg, std::vector<double>(p.dim(), 0.0));
    EXPECT_LE(max_abs_diff(dense.x, lazy.x), 1e-12) << to_string(spec.kind);
  }
}

TEST(Serial, WorkAccountingPerEpoch) {
  const Problem p = testing::small_problem();
  const std::uint64_t m = 2 * p.n();
  SerialSolver svrg(p, config(ScheduleSpec::svrg(m), 0.1, 2), std::vector<double>(p.dim()));
  svrg.run_epoch();
  EXPECT_EQ(svrg.run_epoch().gradient_evaluations, 2 * m + p.n());
  SerialSolver saga(p, config(ScheduleSpec::saga(m), 0.1, 2), std::vector<double>(p.dim()));
  saga.run_epoch();
  EXPECT_EQ(saga.run_epoch().gradient_evaluations, m);
}

TEST(Serial, UniformPickWithOneStepEpochsNeverMoves) {
  const Problem p = testing::small_problem();
  const auto r = solve(p, config(ScheduleSpec::svrg(1), 0.5, 3, PickRule::uniform()),
                       std::vector<double>(p.dim(), 0.0));
  for (const TraceRow& row : r.trace.rows) EXPECT_EQ(row.objective, r.trace.initial_objective);
}

TEST(Serial, ObserverCanStopEarly) {
  const Problem p = testing::small_problem();
  const auto r = solve(p, config(ScheduleSpec::svrg(30), 0.5, 10),
                       std::vector<double>(p.dim(), 0.0),
                       [](EpochView& v) { return v.epoch < 2; });
  EXPECT_EQ(r.trace.rows.size(), 2u);
}

TEST(Serial, DivergenceIsReported) {
  const Problem p = testing::small_problem();
  EXPECT_THROW(solve(p, config(ScheduleSpec::sag(500), 1e6, 50), std::vector<double>(p.dim(), 0.0)),
               DivergenceError);
}

TEST(Serial, ConvergesOnAWellConditionedInstance) {
  auto data = testing::synthetic(200, 30, 5, 4);
  const Problem p = make_problem(data, 1.0 / 200.0);
  for (ScheduleKind kind : {ScheduleKind::svrg, ScheduleKind::saga, ScheduleKind::sag}) {
    ScheduleSpec spec{kind, 400, {}, {}};
    const auto r = solve(p, config(spec, 0.1 / p.smoothness, 30), std::vector<double>(p.dim()));
    double g = 0.0;
    for (double v : full_gradient(p, r.x)) g += v * v;
    EXPECT_LT(std::sqrt(g), 1e-6) << to_string(kind);
  }
}

}  // namespace
}  // namespace asvr
