// SPDX-License-Identifier: Apache-2.0
#include "asvr/schedule.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "asvr/error.hpp"

namespace asvr {

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::svrg: return "svrg";
    case ScheduleKind::saga: return "saga";
    case ScheduleKind::sag: return "sag";
    case ScheduleKind::gd: return "gd";
    case ScheduleKind::hsag: return "hsag";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  for (ScheduleKind k : {ScheduleKind::svrg, ScheduleKind::saga,
                         ScheduleKind::sag, ScheduleKind::gd,
                         ScheduleKind::hsag}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError(fmt::format("unknown schedule '{}'", name));
}

ScheduleSpec ScheduleSpec::svrg(std::uint64_t m) {
  return {ScheduleKind::svrg, m, {}, {}};
}
ScheduleSpec ScheduleSpec::saga(std::uint64_t m) {
  return {ScheduleKind::saga, m, {}, {}};
}
ScheduleSpec ScheduleSpec::sag(std::uint64_t m) {
  return {ScheduleKind::sag, m, {}, {}};
}
ScheduleSpec ScheduleSpec::gd(std::uint64_t m) {
  return {ScheduleKind::gd, m, {}, {}};
}
ScheduleSpec ScheduleSpec::hsag(std::uint64_t m, std::vector<bool> in_saga_set,
                                std::vector<std::uint64_t> frequency) {
  return {ScheduleKind::hsag, m, std::move(in_saga_set), std::move(frequency)};
}
ScheduleSpec ScheduleSpec::hsag(std::uint64_t m, std::vector<bool> in_saga_set,
                                std::uint64_t frequency) {
  const std::size_t n = in_saga_set.size();
  return hsag(m, std::move(in_saga_set),
              std::vector<std::uint64_t>(n, frequency));
}

ScheduleSpec ScheduleSpec::hsag_random(std::uint64_t m, std::size_t n,
                                       double fraction, std::uint64_t seed,
                                       std::uint64_t frequency) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError(fmt::format("S fraction {} outside [0,1]", fraction));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  std::vector<bool> in_s(n, false);
  for (std::size_t k = 0; k < count; ++k) in_s[order[k]] = true;
  return hsag(m, std::move(in_s), frequency);
}

void ScheduleSpec::validate(std::size_t n) const {
  if (epoch_len == 0) throw ConfigError("epoch length m must be positive");
  if (kind != ScheduleKind::hsag) return;
  if (in_saga_set.size() != n || frequency.size() != n) {
    throw ConfigError(fmt::format(
        "hsag needs S membership and periods for all {} examples", n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_saga_set[i] && frequency[i] == 0) {
      throw ConfigError(fmt::format("hsag period s_{} must be positive", i));
    }
  }
}

bool is_biased(ScheduleKind kind) { return kind == ScheduleKind::sag; }
bool is_biased(const ScheduleSpec& spec) { return is_biased(spec.kind); }

ScheduleState::ScheduleState(const Problem& problem, ScheduleSpec spec,
                             std::span<const double> x0,
                             bool track_anchor_points)
    : problem_(&problem), spec_(std::move(spec)),
      track_points_(track_anchor_points) {
  const std::size_t n = problem.n();
  const std::size_t d = problem.dim();
  if (x0.size() != d) {
    throw ConfigError(fmt::format("x0 has length {}, expected {}", x0.size(), d));
  }
  spec_.validate(n);

  std::vector<std::size_t> table_members;
  switch (spec_.kind) {
    case ScheduleKind::svrg:
      snapshots_.push_back({spec_.epoch_len, {}, {}, {}, 0});
      break;
    case ScheduleKind::gd:
      snapshots_.push_back({1, {}, {}, {}, 0});
      break;
    case ScheduleKind::saga:
    case ScheduleKind::sag:
      table_members.resize(n);
      std::iota(table_members.begin(), table_members.end(), std::size_t{0});
      break;
    case ScheduleKind::hsag: {
      entry_of_.assign(n, -1);
      snapshot_index_.assign(n, 0);
      std::map<std::uint64_t, std::vector<std::size_t>> by_period;
      for (std::size_t i = 0; i < n; ++i) {
        if (spec_.in_saga_set[i]) {
          entry_of_[i] = static_cast<std::int64_t>(table_members.size());
          table_members.push_back(i);
        } else {
          by_period[spec_.frequency[i]].push_back(i);
        }
      }
      for (auto& [period, members] : by_period) {
        for (std::size_t i : members) {
          snapshot_index_[i] = static_cast<std::uint32_t>(snapshots_.size());
        }
        snapshots_.push_back({period, std::move(members), {}, {}, 0});
      }
      break;
    }
  }

  table_entries_ = table_members.size();
  if (table_entries_ > 0) {
    const auto row_ptr = problem.data->row_ptr();
    entry_offset_.reserve(table_entries_ + 1);
    entry_offset_.push_back(0);
    for (std::size_t i : table_members) {
      entry_offset_.push_back(entry_offset_.back() + row_ptr[i + 1] - row_ptr[i]);
    }
    slots_.assign(entry_offset_.back(), 0.0);
    if (track_points_) anchor_points_.assign(entry_offset_.back(), 0.0);
    table_mean_.assign(d, 0.0);

    std::vector<double> sum(d, 0.0);
    std::vector<double> xs;
    std::vector<bool> touched(d, false);
    for (std::size_t e = 0; e < table_entries_; ++e) {
      const std::size_t i = table_members[e];
      const ExampleView ex = problem.data->example(i);
      xs.resize(ex.size());
      for (std::size_t k = 0; k < ex.size(); ++k) xs[k] = x0[ex.indices[k]];
      std::span<double> slot(slots_.data() + entry_offset_[e], ex.size());
      component_gradient_on_support(problem, i, xs, slot);
      ++grad_evals_;
      for (std::size_t k = 0; k < ex.size(); ++k) {
        sum[ex.indices[k]] += slot[k];
        touched[ex.indices[k]] = true;
      }
      if (track_points_) {
        std::copy(xs.begin(), xs.end(), anchor_points_.begin() + entry_offset_[e]);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      table_mean_[j] = sum[j] / static_cast<double>(n);
      if (touched[j]) table_features_.push_back(static_cast<FeatureId>(j));
    }
  }

  for (Snapshot& snap : snapshots_) {
    snap.anchor.assign(x0.begin(), x0.end());
    snap.mean_grad.assign(d, 0.0);
    if (snap.members.empty()) {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      accumulate_mean_gradient(problem, all, snap.anchor, snap.mean_grad);
      grad_evals_ += n;
    } else {
      accumulate_mean_gradient(problem, snap.members, snap.anchor,
                               snap.mean_grad);
      grad_evals_ += snap.members.size();
    }
  }
  rebuild_snapshot_mean();
}

bool ScheduleState::in_table(std::size_t i) const noexcept {
  if (!entry_of_.empty()) return entry_of_[i] >= 0;
  return table_entries_ > 0;
}

std::optional<std::size_t> ScheduleState::snapshot_of(
    std::size_t i) const noexcept {
  if (!entry_of_.empty()) {
    if (entry_of_[i] >= 0) return std::nullopt;
    return snapshot_index_[i];
  }
  if (table_entries_ > 0) return std::nullopt;
  return std::size_t{0};
}

bool ScheduleState::refresh_pending(std::uint64_t t) const noexcept {
  return std::any_of(snapshots_.begin(), snapshots_.end(),
                     [t](const Snapshot& s) {
                       return t % s.period == 0 && s.last_refresh != t;
                     });
}

bool ScheduleState::refreshes_mid_epoch() const noexcept {
  return std::any_of(snapshots_.begin(), snapshots_.end(),
                     [this](const Snapshot& s) {
                       return s.period % spec_.epoch_len != 0;
                     });
}

std::size_t ScheduleState::refresh_due(std::uint64_t t,
                                       std::span<const double> x) {
  const std::uint64_t before = grad_evals_;
  bool any = false;
  for (Snapshot& snap : snapshots_) {
    if (t % snap.period == 0 && snap.last_refresh != t) {
      refresh(snap, t, x);
      any = true;
    }
  }
  if (any) rebuild_snapshot_mean();
  return static_cast<std::size_t>(grad_evals_ - before);
}

void ScheduleState::refresh(Snapshot& snap, std::uint64_t t,
                            std::span<const double> x) {
  snap.anchor.assign(x.begin(), x.end());
  std::fill(snap.mean_grad.begin(), snap.mean_grad.end(), 0.0);
  if (snap.members.empty()) {
    std::vector<std::size_t> all(problem_->n());
    std::iota(all.begin(), all.end(), std::size_t{0});
    accumulate_mean_gradient(*problem_, all, snap.anchor, snap.mean_grad);
    grad_evals_ += all.size();
  } else {
    accumulate_mean_gradient(*problem_, snap.members, snap.anchor,
                             snap.mean_grad);
    grad_evals_ += snap.members.size();
  }
  snap.last_refresh = t;
}

void ScheduleState::rebuild_snapshot_mean() {
  if (snapshots_.empty()) {
    snapshot_mean_.clear();
    return;
  }
  snapshot_mean_.assign(problem_->dim(), 0.0);
  for (const Snapshot& snap : snapshots_) {
    for (std::size_t j = 0; j < snapshot_mean_.size(); ++j) {
      snapshot_mean_[j] += snap.mean_grad[j];
    }
  }
}

std::span<double> ScheduleState::table_slots(std::size_t i) noexcept {
  const std::size_t e =
      entry_of_.empty() ? i : static_cast<std::size_t>(entry_of_[i]);
  return {slots_.data() + entry_offset_[e], entry_offset_[e + 1] - entry_offset_[e]};
}

std::span<const double> ScheduleState::table_slots(std::size_t i) const noexcept {
  const std::size_t e =
      entry_of_.empty() ? i : static_cast<std::size_t>(entry_of_[i]);
  return {slots_.data() + entry_offset_[e], entry_offset_[e + 1] - entry_offset_[e]};
}

std::span<double> ScheduleState::tracked_anchor(std::size_t i) noexcept {
  if (!track_points_) return {};
  const std::size_t e =
      entry_of_.empty() ? i : static_cast<std::size_t>(entry_of_[i]);
  return {anchor_points_.data() + entry_offset_[e],
          entry_offset_[e + 1] - entry_offset_[e]};
}

void ScheduleState::anchor_gradient(std::size_t i, std::span<double> out) const {
  if (in_table(i)) {
    const auto slots = table_slots(i);
    std::copy(slots.begin(), slots.end(), out.begin());
    return;
  }
  const Snapshot& snap = snapshots_[*snapshot_of(i)];
  const ExampleView ex = problem_->data->example(i);
  std::vector<double> xs(ex.size());
  for (std::size_t k = 0; k < ex.size(); ++k) xs[k] = snap.anchor[ex.indices[k]];
  component_gradient_on_support(*problem_, i, xs, out);
  ++grad_evals_;
}

void ScheduleState::record(std::size_t i, std::span<const double> grad,
                           std::span<const double> x_support) {
  const ExampleView ex = problem_->data->example(i);
  const auto slots = table_slots(i);
  const double n = static_cast<double>(problem_->n());
  for (std::size_t k = 0; k < ex.size(); ++k) {
    const double old = slots[k];
    slots[k] = grad[k];
    table_mean_[ex.indices[k]] += (grad[k] - old) / n;
  }
  if (track_points_) {
    const auto pts = tracked_anchor(i);
    std::copy(x_support.begin(), x_support.end(), pts.begin());
  }
}

std::vector<double> ScheduleState::mean_gradient() const {
  std::vector<double> out(problem_->dim(), 0.0);
  if (!table_mean_.empty()) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += table_mean_[j];
  }
  if (!snapshot_mean_.empty()) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += snapshot_mean_[j];
  }
  return out;
}

std::vector<double> ScheduleState::vr_direction(
    std::size_t i, const ComponentGradient& grad_at_x) const {
  std::vector<double> dir = mean_gradient();
  std::vector<double> anchor(grad_at_x.values.size());
  anchor_gradient(i, anchor);
  for (std::size_t k = 0; k < anchor.size(); ++k) {
    dir[grad_at_x.support[k]] += grad_at_x.values[k] - anchor[k];
  }
  return dir;
}

double ScheduleState::table_mean_drift() const {
  if (table_entries_ == 0) return 0.0;
  std::vector<double> sum(problem_->dim(), 0.0);
  for (std::size_t i = 0; i < problem_->n(); ++i) {
    if (!in_table(i)) continue;
    const ExampleView ex = problem_->data->example(i);
    const auto slots = table_slots(i);
    for (std::size_t k = 0; k < ex.size(); ++k) sum[ex.indices[k]] += slots[k];
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < sum.size(); ++j) {
    worst = std::max(worst, std::abs(sum[j] / static_cast<double>(problem_->n()) -
                                     table_mean_[j]));
  }
  return worst;
}

double ScheduleState::snapshot_mean_drift() const {
  if (snapshots_.empty()) return 0.0;
  std::vector<double> fresh(problem_->dim(), 0.0);
  for (const Snapshot& snap : snapshots_) {
    if (snap.members.empty()) {
      std::vector<std::size_t> all(problem_->n());
      std::iota(all.begin(), all.end(), std::size_t{0});
      accumulate_mean_gradient(*problem_, all, snap.anchor, fresh);
    } else {
      accumulate_mean_gradient(*problem_, snap.members, snap.anchor, fresh);
    }
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < fresh.size(); ++j) {
    worst = std::max(worst, std::abs(fresh[j] - snapshot_mean_[j]));
  }
  return worst;
}

double ScheduleState::lyapunov_g(std::span<const double> x_star) const {
  if (table_entries_ == 0) return 0.0;
  if (!track_points_) {
    throw ConfigError("lyapunov_g needs anchor point tracking");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < problem_->n(); ++i) {
    if (!in_table(i)) continue;
    const std::size_t e =
        entry_of_.empty() ? i : static_cast<std::size_t>(entry_of_[i]);
    std::span<const double> pts(anchor_points_.data() + entry_offset_[e],
                                entry_offset_[e + 1] - entry_offset_[e]);
    total += component_bregman_on_support(*problem_, i, pts, x_star);
  }
  return total / static_cast<double>(problem_->n());
}

}  // namespace asvr
