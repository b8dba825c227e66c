// SPDX-License-Identifier: Apache-2.0
#include "asvr/async_solver.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <barrier>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include "asvr/error.hpp"
#include "step_kernel.hpp"

namespace asvr {

std::string_view to_string(LockMode mode) {
  return mode == LockMode::lock_free ? "lock_free" : "locked";
}

LockMode parse_lock_mode(std::string_view name) {
  if (name == "lock_free" || name == "lock-free") return LockMode::lock_free;
  if (name == "locked") return LockMode::locked;
  throw ConfigError(fmt::format("unknown lock mode '{}'", name));
}

double SharedParams::load(std::size_t j) const noexcept {
  return detail::AtomicCells::load(cells[j]);
}

std::vector<double> SharedParams::snapshot() const {
  std::vector<double> out(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) out[j] = load(j);
  return out;
}

std::uint64_t apply_update_lockfree(SharedParams& params,
                                    std::span<const FeatureId> support,
                                    std::span<const double> deltas) {
  std::uint64_t retries = 0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    retries += detail::AtomicCells::add(params.cells[support[k]], deltas[k]);
  }
  return retries;
}

void AsyncConfig::validate(const Problem& p) const {
  base.validate(p);
  if (threads == 0) throw ConfigError("async solver needs at least one thread");
  const ScheduleKind kind = base.schedule.kind;
  if (kind == ScheduleKind::sag || kind == ScheduleKind::gd) {
    throw ConfigError(fmt::format(
        "async solver supports svrg, saga and hsag, not {}", to_string(kind)));
  }
  if (!epoch_barrier && kind != ScheduleKind::saga) {
    throw ConfigError("the epoch barrier can only be disabled for saga");
  }
  if (kind == ScheduleKind::hsag) {
    const auto& spec = base.schedule;
    for (std::size_t i = 0; i < spec.frequency.size(); ++i) {
      if (!spec.in_saga_set[i] && spec.frequency[i] % spec.epoch_len != 0) {
        throw ConfigError(fmt::format(
            "async hsag needs periods that are multiples of m; s_{} = {}", i,
            spec.frequency[i]));
      }
    }
  }
}

namespace {

enum Phase : int { idle, claiming, reading, computing, applying, waiting, done };

std::string_view phase_name(int phase) {
  switch (phase) {
    case idle: return "idle";
    case claiming: return "claiming";
    case reading: return "reading";
    case computing: return "computing";
    case applying: return "applying";
    case waiting: return "at-barrier";
    case done: return "done";
  }
  return "?";
}

struct alignas(64) WorkerSlot {
  std::vector<std::uint64_t> histogram;
  std::uint64_t max_staleness = 0;
  std::uint64_t epoch_max = 0;
  std::uint64_t samples = 0;
  std::uint64_t violations = 0;
  std::uint64_t retries = 0;
  std::atomic<int> phase{idle};
};

struct Boundary {
  double wall_seconds = 0.0;
  std::vector<double> x;
};

struct Run {
  Run(const Problem& problem, const AsyncConfig& c, std::span<const double> x0,
      EpochObserver obs)
      : p(problem),
        cfg(c),
        state(p, cfg.base.schedule, x0, false),
        shared(x0),
        selector(cfg.base.pick, cfg.base.m(), cfg.base.seed),
        slots(cfg.threads),
        seen(cfg.base.m()),
        captured(p.dim()),
        observer(std::move(obs)) {}

  using Kernel = detail::StepKernel<detail::AtomicCells>;
  Kernel kernel() {
    return {p, state, shared.cells, cfg.base.eta, cfg.base.jit};
  }
  double scale_at(std::uint64_t t) const {
    return cfg.base.jit ? cfg.base.eta * static_cast<double>(t - base_step) : 0.0;
  }
  bool locked() const { return cfg.mode == LockMode::locked; }

  void fail(std::exception_ptr e) {
    {
      std::lock_guard lock(error_mu);
      if (!error) error = std::move(e);
    }
    abort.store(true);
  }

  void step(std::uint64_t c, std::size_t i, WorkerSlot& slot,
            detail::StepBuffers& buf, std::uint64_t epoch_first) {
    Kernel k = kernel();
    slot.phase.store(reading, std::memory_order_relaxed);
    std::uint64_t read_at = 0;
    bool ok = false;
    {
      std::shared_lock<std::shared_mutex> lock(rw, std::defer_lock);
      if (locked()) lock.lock();
      read_at = shared.counter.load(std::memory_order_acquire);
      const double scale = scale_at(read_at);
      if (c == capture_index) k.materialize(scale, captured);
      ok = k.gather(i, scale, buf);
      if (cfg.joint_read) k.anchor(i, buf);
    }
    if (!ok) {
      std::vector<double> x(p.dim());
      k.materialize(scale_at(read_at), x);
      fail(std::make_exception_ptr(DivergenceError(
          c, detail::checked_norm(x),
          fmt::format("iterate diverged at step {}", c))));
      return;
    }
    slot.phase.store(computing, std::memory_order_relaxed);
    k.gradient(i, buf);
    if (!cfg.joint_read) k.anchor(i, buf);
    k.correction(buf);

    slot.phase.store(applying, std::memory_order_relaxed);
    std::uint64_t t = 0;
    {
      std::unique_lock<std::shared_mutex> lock(rw, std::defer_lock);
      if (locked()) lock.lock();
      slot.retries += k.apply(i, buf, true);
      if (state.in_table(i)) k.record(i, buf);
      t = shared.counter.fetch_add(1, std::memory_order_acq_rel);
    }

    const std::uint64_t lag = t - read_at;
    if (slot.histogram.size() <= lag) slot.histogram.resize(lag + 1, 0);
    ++slot.histogram[lag];
    ++slot.samples;
    slot.max_staleness = std::max(slot.max_staleness, lag);
    slot.epoch_max = std::max(slot.epoch_max, lag);
    if (read_at < epoch_first) ++slot.violations;
    if (cfg.tau_cap && lag > *cfg.tau_cap) {
      fail(std::make_exception_ptr(AsyncAbort(fmt::format(
          "staleness {} at step {} exceeds tau_cap {}", lag, t, *cfg.tau_cap))));
    }
  }

  std::uint64_t take_epoch_max() {
    std::uint64_t worst = 0;
    for (WorkerSlot& s : slots) {
      worst = std::max(worst, s.epoch_max);
      s.epoch_max = 0;
    }
    return worst;
  }

  // Single-threaded epoch boundary, run inside the barrier.
  void end_epoch() {
    if (abort.load()) {
      stop.store(true);
      return;
    }
    const std::uint64_t m = cfg.base.m();
    const std::uint64_t t_end = epoch_end;
    if (shared.counter.load() != t_end) claims_exact = false;
    for (auto& s : seen) {
      if (s.load(std::memory_order_relaxed) != 1) claims_exact = false;
      s.store(0, std::memory_order_relaxed);
    }

    std::vector<double> x_last(p.dim());
    kernel().materialize(scale_at(t_end), x_last);
    std::vector<double> x_tilde =
        cfg.base.pick.kind == PickKind::last ? x_last : captured;
    const double norm = detail::checked_norm(x_last);
    if (!(norm <= detail::kDivergenceBound)) {
      throw DivergenceError(t_end, norm,
                            fmt::format("iterate diverged by step {}", t_end));
    }
    std::copy(x_tilde.begin(), x_tilde.end(), shared.cells.begin());
    base_step = t_end;
    state.refresh_due(t_end, x_tilde);
    ++epochs;
    ++barrier_passes;

    TraceRow row;
    row.epoch = epochs;
    row.wall_seconds = clock.seconds();
    clock.pause();
    row.objective = full_objective(p, x_tilde);
    row.objective_last = cfg.base.pick.kind == PickKind::last
                             ? row.objective
                             : full_objective(p, x_last);
    row.max_staleness = take_epoch_max();
    bool keep_going = true;
    if (observer) {
      EpochView view{row.epoch, x_tilde, state, row};
      keep_going = observer(view);
    }
    trace.rows.push_back(row);

    if (!keep_going || epochs >= cfg.base.epochs) {
      stop.store(true);
    } else {
      epoch_start = t_end;
      epoch_end = t_end + m;
      capture_index = epoch_start + selector.draw();
      claimed.store(epoch_start);
    }
    clock.resume();
  }

  template <class Sync>
  void worker_barrier(std::size_t w, Sync& sync) {
    WorkerSlot& slot = slots[w];
    auto rng = rng::index_stream(cfg.base.seed, w);
    std::uniform_int_distribution<std::size_t> idx(0, p.n() - 1);
    detail::StepBuffers buf;
    try {
      while (!stop.load()) {
        for (;;) {
          slot.phase.store(claiming, std::memory_order_relaxed);
          if (abort.load(std::memory_order_relaxed)) break;
          const std::uint64_t c = claimed.fetch_add(1);
          if (c >= epoch_end) break;
          seen[c - epoch_start].fetch_add(1, std::memory_order_relaxed);
          step(c, idx(rng), slot, buf, epoch_start);
        }
        slot.phase.store(waiting, std::memory_order_relaxed);
        sync.arrive_and_wait();
      }
    } catch (...) {
      fail(std::current_exception());
      sync.arrive_and_drop();
    }
    evals.fetch_add(buf.evals);
  }

  void worker_free(std::size_t w) {
    WorkerSlot& slot = slots[w];
    auto rng = rng::index_stream(cfg.base.seed, w);
    std::uniform_int_distribution<std::size_t> idx(0, p.n() - 1);
    detail::StepBuffers buf;
    const std::uint64_t m = cfg.base.m();
    const std::uint64_t total = m * cfg.base.epochs;
    try {
      for (;;) {
        slot.phase.store(claiming, std::memory_order_relaxed);
        if (abort.load(std::memory_order_relaxed)) break;
        const std::uint64_t c = claimed.fetch_add(1);
        if (c >= total) break;
        if (c > 0 && c % m == 0) {
          Boundary& b = boundaries[c / m - 1];
          b.wall_seconds = clock.seconds();
          b.x.resize(p.dim());
          kernel().materialize(0.0, b.x);
        }
        step(c, idx(rng), slot, buf, (c / m) * m);
      }
    } catch (...) {
      fail(std::current_exception());
    }
    evals.fetch_add(buf.evals);
  }

  Problem p;
  AsyncConfig cfg;
  ScheduleState state;
  SharedParams shared;
  detail::IterateSelector selector;
  std::vector<WorkerSlot> slots;
  std::vector<std::atomic<std::uint8_t>> seen;
  std::vector<double> captured;
  std::vector<Boundary> boundaries;
  EpochObserver observer;
  ConvergenceTrace trace;
  Stopwatch clock;
  std::shared_mutex rw;

  std::atomic<std::uint64_t> claimed{0};
  std::uint64_t base_step = 0;
  std::uint64_t epoch_start = 0;
  std::uint64_t epoch_end = 0;
  std::uint64_t capture_index = 0;
  std::uint64_t epochs = 0;
  std::atomic<std::uint64_t> barrier_passes{0};
  std::atomic<std::uint64_t> evals{0};
  bool claims_exact = true;

  std::atomic<bool> stop{false};
  std::atomic<bool> abort{false};
  std::mutex error_mu;
  std::exception_ptr error;

  std::mutex done_mu;
  std::condition_variable done_cv;
  std::size_t finished = 0;
};

struct EpochCompletion {
  Run* run;
  void operator()() noexcept {
    try {
      run->end_epoch();
    } catch (...) {
      run->fail(std::current_exception());
      run->stop.store(true);
    }
  }
};
using EpochSync = std::barrier<EpochCompletion>;

}  // namespace

AsyncResult run_async(const Problem& problem, const AsyncConfig& config,
                      std::span<const double> x0, const EpochObserver& observer) {
  config.validate(problem);
  AsyncResult out;
  out.trace.initial_objective = full_objective(problem, x0);
  if (config.base.epochs == 0) {
    out.x.assign(x0.begin(), x0.end());
    return out;
  }

  auto run = std::make_shared<Run>(problem, config, x0, observer);
  const std::uint64_t m = config.base.m();
  const std::size_t threads = config.threads;
  run->epoch_end = m;
  if (config.epoch_barrier) {
    run->capture_index = run->selector.draw();
  } else {
    run->capture_index = ~std::uint64_t{0};
    run->boundaries.resize(config.base.epochs - 1);
  }

  auto sync = std::make_shared<EpochSync>(static_cast<std::ptrdiff_t>(threads),
                                          EpochCompletion{run.get()});

  std::vector<std::thread> pool;
  pool.reserve(threads);
  run->clock = Stopwatch();
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([run, sync, w] {
      if (run->cfg.epoch_barrier) {
        run->worker_barrier(w, *sync);
      } else {
        run->worker_free(w);
      }
      run->slots[w].phase.store(done);
      {
        std::lock_guard lock(run->done_mu);
        ++run->finished;
      }
      run->done_cv.notify_all();
    });
  }

  // Watchdog: abort when neither steps nor barriers make progress.
  auto progress = [&] {
    return run->shared.counter.load() + run->barrier_passes.load();
  };
  std::uint64_t last_seen = progress();
  auto last_change = std::chrono::steady_clock::now();
  bool stalled = false;
  {
    std::unique_lock lock(run->done_mu);
    while (run->finished < threads) {
      run->done_cv.wait_for(lock, std::chrono::milliseconds(50));
      const std::uint64_t now_seen = progress();
      const auto now = std::chrono::steady_clock::now();
      if (now_seen != last_seen) {
        last_seen = now_seen;
        last_change = now;
      } else if (now - last_change > config.watchdog) {
        stalled = true;
        break;
      }
    }
  }
  if (stalled) {
    std::string states;
    for (std::size_t w = 0; w < threads; ++w) {
      states += fmt::format("{}worker {}: {}", w ? ", " : "", w,
                            phase_name(run->slots[w].phase.load()));
    }
    run->abort.store(true);
    run->stop.store(true);
    std::unique_lock lock(run->done_mu);
    const bool joined = run->done_cv.wait_for(lock, std::chrono::seconds(2), [&] {
      return run->finished == threads;
    });
    lock.unlock();
    for (auto& th : pool) {
      if (joined) {
        th.join();
      } else {
        th.detach();
      }
    }
    throw AsyncAbort(fmt::format("watchdog: no progress for {} ms ({})",
                                 config.watchdog.count(), states));
  }
  for (auto& th : pool) th.join();
  if (run->error) std::rethrow_exception(run->error);

  StalenessTrace& st = out.staleness;
  for (const WorkerSlot& s : run->slots) {
    if (st.histogram.size() < s.histogram.size()) st.histogram.resize(s.histogram.size(), 0);
    for (std::size_t d = 0; d < s.histogram.size(); ++d) st.histogram[d] += s.histogram[d];
    st.max_staleness = std::max(st.max_staleness, s.max_staleness);
    st.samples += s.samples;
    st.barrier_violations += s.violations;
    st.cas_retries += s.retries;
  }
  st.barrier_passes = run->barrier_passes.load();

  if (config.epoch_barrier) {
    st.claims_exact = run->claims_exact;
    out.trace.rows = std::move(run->trace.rows);
    out.x.resize(problem.dim());
    run->kernel().materialize(run->scale_at(run->shared.counter.load()), out.x);
  } else {
    const std::uint64_t total = m * config.base.epochs;
    st.claims_exact = run->shared.counter.load() == total;
    const double final_wall = run->clock.seconds();
    out.x = run->shared.snapshot();
    for (std::uint64_t k = 1; k <= config.base.epochs; ++k) {
      const bool last = k == config.base.epochs;
      const std::vector<double>& xk = last ? out.x : run->boundaries[k - 1].x;
      TraceRow row;
      row.epoch = k;
      row.wall_seconds = last ? final_wall : run->boundaries[k - 1].wall_seconds;
      row.objective = full_objective(problem, xk);
      row.objective_last = row.objective;
      if (observer) {
        EpochView view{k, xk, run->state, row};
        observer(view);
      }
      out.trace.rows.push_back(row);
    }
    out.trace.metadata["unanalyzed-per-epoch"] = "true";
    out.trace.metadata["pick"] = "last";
  }
  out.trace.metadata["solver"] = "async";
  out.trace.metadata["mode"] = std::string(to_string(config.mode));
  out.trace.metadata["threads"] = std::to_string(threads);
  out.trace.metadata["schedule"] = std::string(to_string(config.base.schedule.kind));
  out.trace.metadata["barrier"] = config.epoch_barrier ? "on" : "off";
  return out;
}

}  // namespace asvr
