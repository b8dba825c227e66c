// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "asvr/solver.hpp"

namespace asvr {

enum class LockMode { lock_free, locked };

std::string_view to_string(LockMode mode);
LockMode parse_lock_mode(std::string_view name);

struct AsyncConfig {
  std::size_t threads = 1;
  LockMode mode = LockMode::lock_free;
  SolverConfig base;
  /// Abort when an observed delay t - D(t) exceeds this bound.
  std::optional<std::uint64_t> tau_cap;
  /// Synchronize all workers at each epoch end. Disabling is only allowed
  /// for saga and leaves the per-epoch analysis inapplicable.
  bool epoch_barrier = true;
  /// Read x and the anchor gradient in one pass before computing.
  bool joint_read = true;
  /// Abort when no step or barrier completes for this long.
  std::chrono::milliseconds watchdog{120000};

  void validate(const Problem& p) const;
};

/// Shared parameter vector plus the global step counter.
struct SharedParams {
  explicit SharedParams(std::span<const double> x0) : cells(x0.begin(), x0.end()) {}
  SharedParams(const SharedParams&) = delete;
  SharedParams& operator=(const SharedParams&) = delete;

  std::vector<double> cells;
  std::atomic<std::uint64_t> counter{0};

  double load(std::size_t j) const noexcept;
  std::vector<double> snapshot() const;
};

/// cells[support[k]] += deltas[k] via per-coordinate CAS. Returns retries.
std::uint64_t apply_update_lockfree(SharedParams& params,
                                    std::span<const FeatureId> support,
                                    std::span<const double> deltas);

struct StalenessTrace {
  /// histogram[d] counts steps with t - D(t) = d.
  std::vector<std::uint64_t> histogram;
  std::uint64_t max_staleness = 0;
  std::uint64_t samples = 0;
  /// Steps whose read D(t) predates the start of their epoch.
  std::uint64_t barrier_violations = 0;
  std::uint64_t barrier_passes = 0;
  std::uint64_t cas_retries = 0;
  /// Every claimed index was applied exactly once.
  bool claims_exact = true;
};

struct AsyncResult {
  std::vector<double> x;
  ConvergenceTrace trace;
  StalenessTrace staleness;
};

/// Runs `config.base.epochs` epochs with `config.threads` workers.
/// Throws AsyncAbort on watchdog or tau_cap, DivergenceError on blow-up.
AsyncResult run_async(const Problem& problem, const AsyncConfig& config,
                      std::span<const double> x0,
                      const EpochObserver& observer = {});

}  // namespace asvr
