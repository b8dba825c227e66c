// SPDX-License-Identifier: Apache-2.0
#include <fmt/format.h>

#include <cmath>
#include <random>

#include "asvr/error.hpp"
#include "asvr/solver.hpp"
#include "step_kernel.hpp"

namespace asvr {

namespace rng {

std::mt19937_64 index_stream(std::uint64_t seed, std::uint64_t worker) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(worker),
                    static_cast<std::uint32_t>(worker >> 32), 1u};
  return std::mt19937_64(seq);
}

std::mt19937_64 selection_stream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0u, 0u, 2u};
  return std::mt19937_64(seq);
}

}  // namespace rng

std::vector<double> pick_probabilities(const PickRule& rule, std::uint64_t m) {
  std::vector<double> p;
  switch (rule.kind) {
    case PickKind::last: return p;
    case PickKind::uniform:
      p.assign(m, 1.0 / static_cast<double>(m));
      return p;
    case PickKind::geometric: {
      p.resize(m);
      const double log_base = std::log1p(-1.0 / rule.kappa);
      double total = 0.0;
      for (std::uint64_t r = 1; r <= m; ++r) {
        p[r - 1] = std::exp(static_cast<double>(m - r) * log_base);
        total += p[r - 1];
      }
      for (double& v : p) v /= total;
      return p;
    }
  }
  return p;
}

void SolverConfig::validate(const Problem& p) const {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ConfigError(fmt::format("step size eta must be positive, got {}", eta));
  }
  schedule.validate(p.n());
  if (pick.kind == PickKind::geometric &&
      (!(pick.kappa > 1.0) || !std::isfinite(pick.kappa))) {
    throw ConfigError(
        fmt::format("geometric pick needs kappa > 1, got {}", pick.kappa));
  }
  if (jit && schedule.kind != ScheduleKind::svrg &&
      schedule.kind != ScheduleKind::hsag) {
    throw ConfigError(fmt::format("lazy updates support svrg and hsag, not {}",
                                  to_string(schedule.kind)));
  }
}

std::vector<double> jit_materialize(const JitState& js,
                                    std::span<const double> snapshot_mean,
                                    std::uint64_t t,
                                    std::span<const FeatureId> coords) {
  std::vector<double> out(coords.size());
  const double scale = js.scale(t);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const FeatureId j = coords[k];
    out[k] = js.bracket1[j] - (snapshot_mean.empty() ? 0.0 : scale * snapshot_mean[j]);
  }
  return out;
}

struct SerialSolver::Impl {
  Impl(const Problem& problem, SolverConfig c, std::span<const double> x0)
      : p(&problem),
        cfg(std::move(c)),
        state((cfg.validate(problem), problem), cfg.schedule, x0,
              cfg.track_anchor_points),
        idx_rng(rng::index_stream(cfg.seed, 0)),
        idx_dist(0, problem.n() - 1),
        selector(cfg.pick, cfg.m(), cfg.seed),
        x_tilde(problem.dim()) {
    js.eta = cfg.eta;
    js.bracket1.assign(x0.begin(), x0.end());
    evals_at_epoch_start = state.gradient_evaluations();
  }

  std::span<double> cells() { return js.bracket1; }
  detail::StepKernel<detail::PlainCells> kernel() {
    return {*p, state, cells(), cfg.eta, cfg.jit};
  }
  double scale_at(std::uint64_t step) const {
    return cfg.jit ? js.scale(step) : 0.0;
  }

  std::vector<double> materialize() {
    std::vector<double> x(p->dim());
    kernel().materialize(scale_at(t), x);
    return x;
  }

  void begin_epoch() {
    if (in_epoch) return;
    clock.resume();
    in_epoch = true;
    epoch_start = t;
    const std::uint64_t offset = selector.draw();
    capture_step = epoch_start + offset;
  }

  void step() {
    if (state.refresh_pending(t)) {
      std::vector<double> x = materialize();
      if (cfg.jit) js.base_step = t;
      js.bracket1 = x;
      state.refresh_due(t, x);
    }
    const std::size_t i = idx_dist(idx_rng);
    auto k = kernel();
    if (t == capture_step) k.materialize(scale_at(t), x_tilde);
    if (!k.gather(i, scale_at(t), buf)) {
      throw DivergenceError(t, detail::checked_norm(materialize()),
                            fmt::format("iterate diverged at step {}", t));
    }
    k.gradient(i, buf);
    if (cfg.schedule.kind == ScheduleKind::sag) {
      k.record(i, buf);
      k.apply(i, buf, false);
    } else {
      k.anchor(i, buf);
      k.correction(buf);
      k.apply(i, buf, true);
      if (state.in_table(i)) k.record(i, buf);
    }
    ++t;
  }

  void advance(std::uint64_t steps) {
    begin_epoch();
    const std::uint64_t end = epoch_start + cfg.m();
    for (std::uint64_t s = 0; s < steps && t < end; ++s) step();
  }

  EpochResult finish() {
    begin_epoch();
    advance(epoch_start + cfg.m() - t);
    EpochResult r;
    r.x_last = materialize();
    if (cfg.pick.kind == PickKind::last) {
      r.x_tilde = r.x_last;
    } else {
      r.x_tilde = x_tilde;
    }
    const double norm = detail::checked_norm(r.x_last);
    if (!(norm <= detail::kDivergenceBound)) {
      throw DivergenceError(t, norm, fmt::format("iterate diverged by step {}", t));
    }
    js.bracket1 = r.x_tilde;
    js.base_step = t;
    state.refresh_due(t, r.x_tilde);
    ++epochs;
    r.row.epoch = epochs;
    r.row.wall_seconds = clock.seconds();
    clock.pause();
    r.row.objective = full_objective(*p, r.x_tilde);
    r.row.objective_last = cfg.pick.kind == PickKind::last
                               ? r.row.objective
                               : full_objective(*p, r.x_last);
    const std::uint64_t total = state.gradient_evaluations() + buf.evals;
    r.gradient_evaluations = total - evals_at_epoch_start;
    evals_at_epoch_start = total;
    in_epoch = false;
    return r;
  }

  const Problem* p;
  SolverConfig cfg;
  ScheduleState state;
  JitState js;
  std::mt19937_64 idx_rng;
  std::uniform_int_distribution<std::size_t> idx_dist;
  detail::IterateSelector selector;
  detail::StepBuffers buf;
  std::vector<double> x_tilde;
  Stopwatch clock;
  std::uint64_t t = 0;
  std::uint64_t epoch_start = 0;
  std::uint64_t capture_step = 0;
  std::uint64_t epochs = 0;
  std::uint64_t evals_at_epoch_start = 0;
  bool in_epoch = false;
};

SerialSolver::SerialSolver(const Problem& problem, SolverConfig config,
                           std::span<const double> x0)
    : impl_(std::make_unique<Impl>(problem, std::move(config), x0)) {}
SerialSolver::~SerialSolver() = default;
SerialSolver::SerialSolver(SerialSolver&&) noexcept = default;
SerialSolver& SerialSolver::operator=(SerialSolver&&) noexcept = default;

EpochResult SerialSolver::run_epoch() { return impl_->finish(); }
void SerialSolver::advance(std::uint64_t steps) { impl_->advance(steps); }
EpochResult SerialSolver::finish_epoch() { return impl_->finish(); }

std::vector<double> SerialSolver::iterate() const {
  return const_cast<Impl&>(*impl_).materialize();
}
const ScheduleState& SerialSolver::state() const noexcept { return impl_->state; }
const JitState* SerialSolver::jit_state() const noexcept {
  return impl_->cfg.jit ? &impl_->js : nullptr;
}
std::uint64_t SerialSolver::step() const noexcept { return impl_->t; }
std::uint64_t SerialSolver::epochs_done() const noexcept { return impl_->epochs; }
std::uint64_t SerialSolver::gradient_evaluations() const noexcept {
  return impl_->state.gradient_evaluations() + impl_->buf.evals;
}
const SolverConfig& SerialSolver::config() const noexcept { return impl_->cfg; }

SolveResult solve(const Problem& problem, const SolverConfig& config,
                  std::span<const double> x0, const EpochObserver& observer) {
  SolveResult out;
  out.trace.initial_objective = full_objective(problem, x0);
  out.trace.metadata["schedule"] = std::string(to_string(config.schedule.kind));
  out.trace.metadata["solver"] = "serial";
  if (is_biased(config.schedule)) out.trace.metadata["biased"] = "true";
  SerialSolver solver(problem, config, x0);
  for (std::uint64_t k = 0; k < config.epochs; ++k) {
    EpochResult r = solver.run_epoch();
    bool keep_going = true;
    if (observer) {
      EpochView view{r.row.epoch, r.x_tilde, solver.state(), r.row};
      keep_going = observer(view);
    }
    out.trace.rows.push_back(r.row);
    if (!keep_going) break;
  }
  out.x = solver.iterate();
  return out;
}

}  // namespace asvr
