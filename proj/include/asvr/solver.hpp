// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "asvr/objective.hpp"
#include "asvr/schedule.hpp"
#include "asvr/trace.hpp"

namespace asvr {

enum class PickKind { geometric, uniform, last };

/// How x~^k is chosen among the epoch iterates x^{km}, ..., x^{km+m-1}.
///
/// geometric: p_r proportional to (1 - 1/kappa)^{m-r}, r = 1..m, where p_r
/// selects x^{km+r-1}. uniform: p_r = 1/m. last: x^{km+m}, which is common
/// practice but outside the analyzed options.
struct PickRule {
  PickKind kind = PickKind::geometric;
  double kappa = 0.0;

  static PickRule geometric(double kappa) { return {PickKind::geometric, kappa}; }
  static PickRule uniform() { return {PickKind::uniform, 0.0}; }
  static PickRule last() { return {PickKind::last, 0.0}; }
};

/// Normalized selection probabilities p_1..p_m (empty for `last`).
std::vector<double> pick_probabilities(const PickRule& rule, std::uint64_t m);

struct SolverConfig {
  double eta = 0.0;
  std::uint64_t epochs = 0;
  /// Schedule; its epoch_len is the epoch size m.
  ScheduleSpec schedule;
  PickRule pick;
  std::uint64_t seed = 1;
  /// Lazy two-bracket iterate (svrg and hsag only).
  bool jit = false;
  /// Keep alpha_i points for table members (needed for G~).
  bool track_anchor_points = false;

  std::uint64_t m() const noexcept { return schedule.epoch_len; }
  void validate(const Problem& p) const;
};

/// Lazy iterate: x_j = bracket1_j - eta (t - base_step) * mean_j, where mean
/// is the snapshot part of the anchor gradient average, constant between
/// snapshot refreshes.
struct JitState {
  std::vector<double> bracket1;
  std::uint64_t base_step = 0;
  double eta = 0.0;

  double scale(std::uint64_t t) const noexcept {
    return eta * static_cast<double>(t - base_step);
  }
};

/// x at step t on `coords`, aggregating both brackets.
std::vector<double> jit_materialize(const JitState& js,
                                    std::span<const double> snapshot_mean,
                                    std::uint64_t t,
                                    std::span<const FeatureId> coords);

struct EpochResult {
  std::vector<double> x_tilde;
  std::vector<double> x_last;
  TraceRow row;
  std::uint64_t gradient_evaluations = 0;
};

/// What an observer sees at an epoch boundary. Runs with the clock paused.
struct EpochView {
  std::uint64_t epoch;
  std::span<const double> x_tilde;
  const ScheduleState& state;
  TraceRow& row;
};
/// Return false to stop after this epoch.
using EpochObserver = std::function<bool(EpochView&)>;

/// Sequential generic variance-reduced loop with epoch structure.
class SerialSolver {
 public:
  SerialSolver(const Problem& problem, SolverConfig config,
               std::span<const double> x0);
  ~SerialSolver();
  SerialSolver(SerialSolver&&) noexcept;
  SerialSolver& operator=(SerialSolver&&) noexcept;

  /// m steps, iterate selection, replacement and snapshot refresh.
  EpochResult run_epoch();

  /// Runs up to `steps` steps without crossing the epoch boundary.
  void advance(std::uint64_t steps);
  /// Completes the current epoch (any remaining steps included).
  EpochResult finish_epoch();

  /// Dense current iterate x^t.
  std::vector<double> iterate() const;
  const ScheduleState& state() const noexcept;
  const JitState* jit_state() const noexcept;
  std::uint64_t step() const noexcept;
  std::uint64_t epochs_done() const noexcept;
  std::uint64_t gradient_evaluations() const noexcept;
  const SolverConfig& config() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SolveResult {
  std::vector<double> x;
  ConvergenceTrace trace;
};

/// K epochs from x0 (alpha_i^0 = x0). Deterministic for a fixed seed.
SolveResult solve(const Problem& problem, const SolverConfig& config,
                  std::span<const double> x0,
                  const EpochObserver& observer = {});

namespace rng {
/// Index stream of worker w; the serial solver uses worker 0.
std::mt19937_64 index_stream(std::uint64_t seed, std::uint64_t worker);
/// Stream used for iterate selection.
std::mt19937_64 selection_stream(std::uint64_t seed);
}  // namespace rng

}  // namespace asvr
