// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asvr/objective.hpp"

namespace asvr {

enum class ScheduleKind { svrg, saga, sag, gd, hsag };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

/// Which anchor rule each example follows.
///
/// * svrg: every alpha_i is reset to the current iterate when m | t.
/// * saga: alpha_{i_t} <- x^t after step t.
/// * sag:  alpha_{i_{t+1}} <- x^{t+1}, i.e. written before step t+1 uses it.
/// * gd:   every alpha_i <- x^{t+1}.
/// * hsag: saga rule on S, per-index svrg rule with period s_i elsewhere.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::svrg;
  std::uint64_t epoch_len = 1;
  /// hsag only: membership in S (size n).
  std::vector<bool> in_saga_set;
  /// hsag only: refresh period s_i for i outside S (size n; ignored on S).
  std::vector<std::uint64_t> frequency;

  static ScheduleSpec svrg(std::uint64_t m);
  static ScheduleSpec saga(std::uint64_t m);
  static ScheduleSpec sag(std::uint64_t m);
  static ScheduleSpec gd(std::uint64_t m);
  static ScheduleSpec hsag(std::uint64_t m, std::vector<bool> in_saga_set,
                           std::vector<std::uint64_t> frequency);
  /// hsag with one period shared by every index outside S.
  static ScheduleSpec hsag(std::uint64_t m, std::vector<bool> in_saga_set,
                           std::uint64_t frequency);
  /// hsag with S drawn as a uniformly random `fraction` of [n].
  static ScheduleSpec hsag_random(std::uint64_t m, std::size_t n,
                                  double fraction, std::uint64_t seed,
                                  std::uint64_t frequency);

  /// Throws ConfigError when inconsistent with a dataset of n examples.
  void validate(std::size_t n) const;
};

/// True only for SAG, whose direction is a biased gradient estimate.
bool is_biased(const ScheduleSpec& spec);
bool is_biased(ScheduleKind kind);

/// The anchor set A^t = {alpha_i^t} in its physical representation.
///
/// Examples following a saga-style rule live in a gradient table that stores
/// grad f_i(alpha_i) on e_i (sum_i |e_i| slots). Examples following an
/// svrg-style rule share a snapshot: an anchor point plus the cached mean of
/// their gradients at it; one snapshot exists per distinct period s_i. The
/// mean anchor gradient (1/n) sum_i grad f_i(alpha_i) is split into
/// `table_mean()` (changes every step) and `snapshot_mean()` (changes only on
/// refresh).
///
/// Anchor rules are applied through two hooks whose timing the solvers fix:
/// `refresh_due(t, x^t)` before step t and `record(i, grad, x_support)` for
/// table writes (before the direction for sag, after the update otherwise).
class ScheduleState {
 public:
  struct Snapshot {
    std::uint64_t period = 0;
    /// Members; empty means "every example" (svrg, gd).
    std::vector<std::size_t> members;
    std::vector<double> anchor;
    /// (1/n) sum_{i in members} grad f_i(anchor).
    std::vector<double> mean_grad;
    std::uint64_t last_refresh = 0;
  };

  /// A^0: every alpha_i = x0. With `track_anchor_points`, table entries also
  /// keep alpha_i restricted to e_i so the Lyapunov term G can be evaluated.
  ScheduleState(const Problem& problem, ScheduleSpec spec,
                std::span<const double> x0, bool track_anchor_points = false);

  const ScheduleSpec& spec() const noexcept { return spec_; }
  const Problem& problem() const noexcept { return *problem_; }

  bool in_table(std::size_t i) const noexcept;
  /// Snapshot index of example i, or nullopt for table members.
  std::optional<std::size_t> snapshot_of(std::size_t i) const noexcept;

  /// Refreshes every snapshot whose period divides t, anchoring it at x.
  /// Returns the number of component gradients evaluated.
  std::size_t refresh_due(std::uint64_t t, std::span<const double> x);
  bool refresh_pending(std::uint64_t t) const noexcept;
  /// True when some snapshot period is not a multiple of the epoch length.
  bool refreshes_mid_epoch() const noexcept;

  /// grad f_i(alpha_i) on e_i. Snapshot members are evaluated at the anchor.
  void anchor_gradient(std::size_t i, std::span<double> out) const;

  /// Table write for example i: alpha_i becomes the point whose restriction
  /// to e_i is `x_support`, with gradient `grad`. Updates the table mean.
  void record(std::size_t i, std::span<const double> grad,
              std::span<const double> x_support);

  /// Dense variance-reduced direction
  /// grad f_i(x) - grad f_i(alpha_i) + (1/n) sum_k grad f_k(alpha_k).
  std::vector<double> vr_direction(std::size_t i,
                                   const ComponentGradient& grad_at_x) const;

  /// Dense (1/n) sum_i grad f_i(alpha_i).
  std::vector<double> mean_gradient() const;

  std::span<const double> table_mean() const noexcept { return table_mean_; }
  std::span<double> table_mean_mut() noexcept { return table_mean_; }
  std::span<const double> snapshot_mean() const noexcept {
    return snapshot_mean_;
  }
  std::span<const Snapshot> snapshots() const noexcept { return snapshots_; }
  bool has_table() const noexcept { return table_entries_ > 0; }
  /// Features touched by some table member (where table_mean can be nonzero).
  std::span<const FeatureId> table_features() const noexcept {
    return table_features_;
  }

  /// Mutable table slots for example i (aligned with e_i); requires
  /// in_table(i).
  std::span<double> table_slots(std::size_t i) noexcept;
  std::span<const double> table_slots(std::size_t i) const noexcept;
  /// Tracked alpha_i on e_i; empty unless anchor tracking is on.
  std::span<double> tracked_anchor(std::size_t i) noexcept;

  /// sum_{i in table} |e_i|.
  std::size_t table_slot_count() const noexcept { return slots_.size(); }
  /// Number of per-example records (table entries) allocated.
  std::size_t table_entry_count() const noexcept { return table_entries_; }

  /// max_j |table_mean_j - recomputed average of stored gradients|.
  double table_mean_drift() const;
  /// max_j |snapshot_mean_j - recomputed mean over snapshots|.
  double snapshot_mean_drift() const;

  /// (1/n) sum_{i in S} D_{f_i}(alpha_i, x_star) over table members.
  /// Requires anchor tracking.
  double lyapunov_g(std::span<const double> x_star) const;
  bool tracks_anchor_points() const noexcept { return track_points_; }

  /// Component gradients evaluated by refreshes and anchor lookups.
  std::uint64_t gradient_evaluations() const noexcept { return grad_evals_; }

 private:
  void refresh(Snapshot& snap, std::uint64_t t, std::span<const double> x);
  void rebuild_snapshot_mean();

  const Problem* problem_;
  ScheduleSpec spec_;
  bool track_points_;

  // -1 for snapshot members, else table entry number. Empty when every
  // example follows the same rule.
  std::vector<std::int64_t> entry_of_;
  std::vector<std::uint32_t> snapshot_index_;
  std::vector<std::size_t> entry_offset_;
  std::size_t table_entries_ = 0;
  std::vector<double> slots_;
  std::vector<double> anchor_points_;
  std::vector<double> table_mean_;
  std::vector<FeatureId> table_features_;

  std::vector<Snapshot> snapshots_;
  std::vector<double> snapshot_mean_;
  mutable std::uint64_t grad_evals_ = 0;
};

}  // namespace asvr
