// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace asvr {

inline constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

/// One row per completed epoch k (1-based).
struct TraceRow {
  std::uint64_t epoch = 0;
  /// Solver time since start, excluding objective evaluation.
  double wall_seconds = 0.0;
  /// f at the selected iterate x~^k.
  double objective = kUnset;
  /// f at the last iterate of the epoch, before x~ replaces it.
  double objective_last = kUnset;
  /// f(x~^k) - f*; filled once a reference optimum is known.
  double suboptimality = kUnset;
  /// G~_k; filled only when x* is known and anchors are tracked.
  double lyapunov_g = kUnset;
  std::uint64_t max_staleness = 0;
};

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
  double initial_objective = kUnset;
  std::map<std::string, std::string> metadata;
};

/// Monotonic stopwatch that can exclude intervals (objective evaluation).
class Stopwatch {
 public:
  using Clock = std::chrono::steady_clock;

  Stopwatch() : start_(Clock::now()) {}

  void pause() {
    if (!paused_) {
      paused_at_ = Clock::now();
      paused_ = true;
    }
  }
  void resume() {
    if (paused_) {
      excluded_ += Clock::now() - paused_at_;
      paused_ = false;
    }
  }
  double seconds() const {
    const auto now = paused_ ? paused_at_ : Clock::now();
    return std::chrono::duration<double>(now - start_ - excluded_).count();
  }

 private:
  Clock::time_point start_;
  Clock::time_point paused_at_{};
  Clock::duration excluded_{0};
  bool paused_ = false;
};

}  // namespace asvr
