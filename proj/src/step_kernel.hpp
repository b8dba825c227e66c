// SPDX-License-Identifier: Apache-2.0
// Step kernel shared by the serial and asynchronous solvers. The memory
// policy decides whether shared cells are touched with plain or atomic ops;
// the arithmetic is identical so one worker reproduces the serial run.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "asvr/error.hpp"
#include "asvr/objective.hpp"
#include "asvr/schedule.hpp"
#include "asvr/solver.hpp"

namespace asvr::detail {

inline constexpr double kDivergenceBound = 1e100;

struct PlainCells {
  static double load(const double& c) noexcept { return c; }
  static void store(double& c, double v) noexcept { c = v; }
  static std::uint64_t add(double& c, double d) noexcept {
    c += d;
    return 0;
  }
  static double exchange(double& c, double v) noexcept {
    const double old = c;
    c = v;
    return old;
  }
};

struct AtomicCells {
  static double load(const double& c) noexcept {
    return std::atomic_ref<double>(const_cast<double&>(c))
        .load(std::memory_order_relaxed);
  }
  static void store(double& c, double v) noexcept {
    std::atomic_ref<double>(c).store(v, std::memory_order_relaxed);
  }
  /// CAS loop; returns the number of failed attempts.
  static std::uint64_t add(double& c, double d) noexcept {
    std::atomic_ref<double> a(c);
    double cur = a.load(std::memory_order_relaxed);
    std::uint64_t retries = 0;
    while (!a.compare_exchange_weak(cur, cur + d, std::memory_order_relaxed,
                                    std::memory_order_relaxed)) {
      ++retries;
    }
    return retries;
  }
  static double exchange(double& c, double v) noexcept {
    return std::atomic_ref<double>(c).exchange(v, std::memory_order_relaxed);
  }
};

inline bool within_bound(double v) noexcept {
  return std::isfinite(v) && std::abs(v) <= kDivergenceBound;
}

/// Euclidean norm, or +inf when some entry is non-finite.
inline double checked_norm(std::span<const double> x) noexcept {
  double s = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) return INFINITY;
    s += v * v;
  }
  return std::sqrt(s);
}

struct StepBuffers {
  std::vector<double> xs;
  std::vector<double> grad;
  std::vector<double> anchor;
  std::vector<double> corr;
  std::uint64_t evals = 0;

  void resize(std::size_t k) {
    xs.resize(k);
    grad.resize(k);
    anchor.resize(k);
    corr.resize(k);
  }
};

template <class Cells>
class StepKernel {
 public:
  StepKernel(const Problem& p, ScheduleState& state, std::span<double> cells,
             double eta, bool jit)
      : p_(p), state_(state), cells_(cells), eta_(eta), jit_(jit) {}

  /// x^t on e_i; `scale` is eta (t - base_step) in lazy mode. False when a
  /// coordinate is non-finite or beyond the divergence bound.
  bool gather(std::size_t i, double scale, StepBuffers& b) const {
    const ExampleView ex = p_.data->example(i);
    b.resize(ex.size());
    const auto sm = state_.snapshot_mean();
    bool ok = true;
    for (std::size_t k = 0; k < ex.size(); ++k) {
      const FeatureId j = ex.indices[k];
      double v = Cells::load(cells_[j]);
      if (jit_) v -= scale * sm[j];
      b.xs[k] = v;
      ok = ok && within_bound(v);
    }
    return ok;
  }

  void gradient(std::size_t i, StepBuffers& b) const {
    component_gradient_on_support(p_, i, b.xs, b.grad);
    ++b.evals;
  }

  /// grad f_i(alpha_i) into b.anchor.
  void anchor(std::size_t i, StepBuffers& b) const {
    if (state_.in_table(i)) {
      const auto slots = state_.table_slots(i);
      for (std::size_t k = 0; k < slots.size(); ++k) {
        b.anchor[k] = Cells::load(slots[k]);
      }
      return;
    }
    const auto& snap = state_.snapshots()[*state_.snapshot_of(i)];
    const ExampleView ex = p_.data->example(i);
    std::vector<double>& as = b.corr;  // scratch; overwritten by correction()
    for (std::size_t k = 0; k < ex.size(); ++k) as[k] = snap.anchor[ex.indices[k]];
    component_gradient_on_support(p_, i, as, b.anchor);
    ++b.evals;
  }

  void correction(StepBuffers& b) const {
    for (std::size_t k = 0; k < b.grad.size(); ++k) {
      b.corr[k] = b.grad[k] - b.anchor[k];
    }
  }

  /// x <- x - eta (mean anchor gradient + correction on e_i). Lazy mode
  /// leaves the snapshot part to the closed form. Returns CAS retries.
  std::uint64_t apply(std::size_t i, const StepBuffers& b,
                      bool with_correction) {
    std::uint64_t retries = 0;
    const auto tm = state_.table_mean();
    const auto sm = state_.snapshot_mean();
    const bool has_table = state_.has_table();
    const bool has_snap = !sm.empty();
    if (jit_) {
      if (has_table) {
        for (FeatureId j : state_.table_features()) {
          retries += Cells::add(cells_[j], -(eta_ * Cells::load(tm[j])));
        }
      }
    } else if (has_table && has_snap) {
      for (std::size_t j = 0; j < cells_.size(); ++j) {
        retries += Cells::add(cells_[j], -(eta_ * (Cells::load(tm[j]) + sm[j])));
      }
    } else if (has_table) {
      for (FeatureId j : state_.table_features()) {
        retries += Cells::add(cells_[j], -(eta_ * Cells::load(tm[j])));
      }
    } else {
      for (std::size_t j = 0; j < cells_.size(); ++j) {
        retries += Cells::add(cells_[j], -(eta_ * sm[j]));
      }
    }
    if (with_correction) {
      const ExampleView ex = p_.data->example(i);
      for (std::size_t k = 0; k < ex.size(); ++k) {
        retries += Cells::add(cells_[ex.indices[k]], -(eta_ * b.corr[k]));
      }
    }
    return retries;
  }

  /// Table write alpha_i <- x (gradient b.grad); keeps the table mean exact.
  void record(std::size_t i, const StepBuffers& b) {
    const ExampleView ex = p_.data->example(i);
    const auto slots = state_.table_slots(i);
    const auto tm = state_.table_mean_mut();
    const double n = static_cast<double>(p_.n());
    for (std::size_t k = 0; k < ex.size(); ++k) {
      const double old = Cells::exchange(slots[k], b.grad[k]);
      Cells::add(tm[ex.indices[k]], (b.grad[k] - old) / n);
    }
    if (state_.tracks_anchor_points()) {
      const auto pts = state_.tracked_anchor(i);
      for (std::size_t k = 0; k < pts.size(); ++k) pts[k] = b.xs[k];
    }
  }

  /// Dense x at lazy scale `scale` (ignored in dense mode).
  void materialize(double scale, std::span<double> out) const {
    const auto sm = state_.snapshot_mean();
    for (std::size_t j = 0; j < cells_.size(); ++j) {
      double v = Cells::load(cells_[j]);
      if (jit_) v -= scale * sm[j];
      out[j] = v;
    }
  }

 private:
  const Problem& p_;
  ScheduleState& state_;
  std::span<double> cells_;
  double eta_;
  bool jit_;
};

/// Per-epoch draw of the offset whose iterate becomes x~.
class IterateSelector {
 public:
  IterateSelector(const PickRule& rule, std::uint64_t m, std::uint64_t seed)
      : kind_(rule.kind), m_(m), rng_(rng::selection_stream(seed)) {
    if (kind_ == PickKind::geometric) {
      const auto probs = pick_probabilities(rule, m);
      geometric_ = std::discrete_distribution<std::uint64_t>(probs.begin(),
                                                             probs.end());
    }
  }

  /// Offset in [0, m) within the epoch, or m for the last iterate.
  std::uint64_t draw() {
    switch (kind_) {
      case PickKind::geometric: return geometric_(rng_);
      case PickKind::uniform:
        return std::uniform_int_distribution<std::uint64_t>(0, m_ - 1)(rng_);
      case PickKind::last: return m_;
    }
    return m_;
  }

 private:
  PickKind kind_;
  std::uint64_t m_;
  std::mt19937_64 rng_;
  std::discrete_distribution<std::uint64_t> geometric_;
};

}  // namespace asvr::detail
