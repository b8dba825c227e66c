// SPDX-License-Identifier: Apache-2.0
#include "asvr/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <barrier>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "asvr/error.hpp"
#include "step_kernel.hpp"

namespace asvr {

// ---------------------------------------------------------------------------
// Symbolic values

namespace {

class ExprParser {
 public:
  ExprParser(std::string_view text, const SymbolTable& symbols)
      : text_(text), symbols_(symbols) {}

  double parse() {
    const double v = product();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return v;
  }

 private:
  double product() {
    double v = factor();
    for (;;) {
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == '*') {
        ++pos_;
        v *= factor();
      } else if (pos_ < text_.size() && text_[pos_] == '/') {
        ++pos_;
        v /= factor();
      } else {
        return v;
      }
    }
  }

  double factor() {
    skip_space();
    if (pos_ >= text_.size()) fail("missing value");
    const char ch = text_[pos_];
    if (ch == '(') {
      ++pos_;
      const double v = product();
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] != ')') fail("missing ')'");
      ++pos_;
      return v;
    }
    double coefficient = 1.0;
    bool has_number = false;
    if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' ||
        ch == '+') {
      const char* begin = text_.data() + pos_;
      const auto [ptr, ec] =
          std::from_chars(begin, text_.data() + text_.size(), coefficient);
      if (ec != std::errc()) fail("malformed number");
      pos_ += static_cast<std::size_t>(ptr - begin);
      has_number = true;
    }
    if (pos_ < text_.size() && is_ident_start(text_[pos_])) {
      return coefficient * symbol();
    }
    if (!has_number) fail("expected a number or symbol");
    return coefficient;
  }

  double symbol() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (is_ident_start(text_[pos_]) ||
            std::isdigit(static_cast<unsigned char>(text_[pos_])))) {
      ++pos_;
    }
    const std::string_view name = text_.substr(start, pos_ - start);
    const auto it = symbols_.find(name);
    if (it == symbols_.end()) {
      throw ConfigError(fmt::format("unknown symbol '{}' in '{}'", name, text_));
    }
    return it->second;
  }

  static bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  void skip_space() {
    while (pos_ < text_.size() && text_[pos_] == ' ') ++pos_;
  }
  [[noreturn]] void fail(std::string_view why) const {
    throw ConfigError(fmt::format("cannot parse '{}': {}", text_, why));
  }

  std::string_view text_;
  const SymbolTable& symbols_;
  std::size_t pos_ = 0;
};

}  // namespace

double resolve_real(std::string_view expr, const SymbolTable& symbols) {
  const double v = ExprParser(expr, symbols).parse();
  if (!std::isfinite(v)) {
    throw ConfigError(fmt::format("'{}' does not evaluate to a finite value", expr));
  }
  return v;
}

std::uint64_t resolve_count(std::string_view expr, const SymbolTable& symbols) {
  const double v = resolve_real(expr, symbols);
  if (!(v >= 1.0 - 1e-9) || v > 1.8e19) {
    throw ConfigError(fmt::format("'{}' = {} is not a positive count", expr, v));
  }
  return static_cast<std::uint64_t>(std::ceil(v - 1e-9));
}

// ---------------------------------------------------------------------------
// Reference optimum

namespace {

std::atomic<std::uint64_t> g_reference_solves{0};

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < len; ++k) {
      h ^= p[k];
      h *= 1099511628211ull;
    }
  }
  template <class T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
  template <class T>
  void span(std::span<const T> s) {
    value(static_cast<std::uint64_t>(s.size()));
    bytes(s.data(), s.size_bytes());
  }
};

double gradient_norm(const Problem& p, std::span<const double> x) {
  return std::sqrt(squared_norm(full_gradient(p, x)));
}

std::optional<ReferenceOptimum> load_cached(const Problem& p,
                                            const std::filesystem::path& bin,
                                            const std::filesystem::path& side,
                                            double tol) {
  if (!std::filesystem::exists(bin) || !std::filesystem::exists(side)) {
    return std::nullopt;
  }
  const nlohmann::json meta = read_json(side);
  if (meta.value("dim", std::size_t{0}) != p.dim()) return std::nullopt;
  if (!(meta.value("grad_norm", INFINITY) <= tol)) return std::nullopt;
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read '{}'", bin.string()));
  ReferenceOptimum r;
  r.x.resize(p.dim());
  in.read(reinterpret_cast<char*>(r.x.data()),
          static_cast<std::streamsize>(r.x.size() * sizeof(double)));
  if (!in) throw IoError(fmt::format("truncated cache file '{}'", bin.string()));
  r.f = full_objective(p, r.x);
  r.grad_norm = meta.at("grad_norm").get<double>();
  r.epochs = meta.value("epochs", std::uint64_t{0});
  r.from_cache = true;
  return r;
}

void store_cache(const Problem& p, const ReferenceOptimum& r, double tol,
                 const std::string& key, const std::filesystem::path& bin,
                 const std::filesystem::path& side) {
  std::filesystem::create_directories(bin.parent_path());
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", bin.string()));
  out.write(reinterpret_cast<const char*>(r.x.data()),
            static_cast<std::streamsize>(r.x.size() * sizeof(double)));
  if (!out) throw IoError(fmt::format("write failed for '{}'", bin.string()));
  write_json({{"key", key},
              {"n", p.n()},
              {"dim", p.dim()},
              {"lambda", p.lambda},
              {"smoothness", p.smoothness},
              {"tol", tol},
              {"grad_norm", r.grad_norm},
              {"f_star", r.f},
              {"epochs", r.epochs}},
             side);
}

}  // namespace

std::string problem_key(const Problem& p) {
  Fnv1a h;
  const SparseDataset& d = *p.data;
  h.value(static_cast<std::uint64_t>(d.size()));
  h.value(static_cast<std::uint64_t>(d.dim()));
  h.span(d.row_ptr());
  h.span(d.cols());
  h.span(d.values());
  h.span(d.labels());
  h.value(p.lambda);
  h.value(p.smoothness);
  return fmt::format("{:016x}", h.h);
}

std::optional<std::filesystem::path> default_cache_dir() {
  const char* dir = std::getenv("ASVR_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return std::filesystem::path(dir);
}

std::uint64_t reference_solves_performed() { return g_reference_solves.load(); }

ReferenceOptimum reference_optimum(const Problem& p, double tol,
                                   const std::optional<std::filesystem::path>& cache_dir,
                                   std::uint64_t max_epochs) {
  if (!(tol >= 1e-14)) {
    throw ConfigError(fmt::format("reference tolerance {} below 1e-14", tol));
  }
  const std::string key = problem_key(p);
  std::filesystem::path bin;
  std::filesystem::path side;
  if (cache_dir) {
    bin = *cache_dir / fmt::format("ref_opt_{}.bin", key);
    side = *cache_dir / fmt::format("ref_opt_{}.json", key);
    if (auto hit = load_cached(p, bin, side, tol)) return *hit;
  }

  ++g_reference_solves;
  SolverConfig cfg;
  cfg.eta = 0.1 / p.smoothness;
  cfg.epochs = max_epochs;
  cfg.schedule = ScheduleSpec::svrg(2 * p.n());
  cfg.pick = PickRule::last();
  cfg.seed = 0x5eedull;
  std::vector<double> x0(p.dim(), 0.0);
  ReferenceOptimum r;
  r.x = x0;
  r.grad_norm = gradient_norm(p, x0);
  if (r.grad_norm > tol) {
    SerialSolver solver(p, cfg, x0);
    for (std::uint64_t k = 0; k < max_epochs; ++k) {
      EpochResult e = solver.run_epoch();
      r.epochs = k + 1;
      const double g = gradient_norm(p, e.x_tilde);
      if (g < r.grad_norm || k == 0) {
        r.grad_norm = g;
        r.x = std::move(e.x_tilde);
      }
      if (r.grad_norm <= tol) break;
    }
  }
  if (!(r.grad_norm <= tol)) {
    throw NumericalError(fmt::format(
        "reference solve stopped at gradient norm {:.3e} > {:.3e} after {} epochs",
        r.grad_norm, tol, r.epochs));
  }
  r.f = full_objective(p, r.x);
  if (cache_dir) store_cache(p, r, tol, key, bin, side);
  return r;
}

// ---------------------------------------------------------------------------
// Baselines

std::string_view to_string(SgdVariant v) {
  return v == SgdVariant::csgd ? "csgd" : "dsgd";
}

SgdVariant parse_sgd_variant(std::string_view name) {
  if (name == "csgd") return SgdVariant::csgd;
  if (name == "dsgd") return SgdVariant::dsgd;
  throw ConfigError(fmt::format("unknown sgd variant '{}'", name));
}

double dsgd_step(double eta0, double sigma0, std::uint64_t t) {
  return eta0 * std::sqrt(sigma0 / (static_cast<double>(t) + sigma0));
}

namespace {

struct BaselineRun;

struct BaselineCompletion {
  BaselineRun* run;
  void operator()() noexcept;
};

struct BaselineRun {
  BaselineRun(const Problem& problem, const BaselineConfig& c,
              std::span<const double> x0, const RowObserver& obs)
      : p(problem), cfg(c), shared(x0), observer(obs), lag_max(c.threads) {}

  void fail(std::exception_ptr e) {
    std::lock_guard lock(mu);
    if (!error) error = std::move(e);
    abort.store(true);
  }

  void step(std::size_t i, std::vector<double>& xs, std::vector<double>& g,
            std::size_t w) {
    const ExampleView ex = p.data->example(i);
    const std::uint64_t read_at = shared.counter.load(std::memory_order_acquire);
    const double eta = cfg.variant == SgdVariant::csgd
                           ? cfg.eta0
                           : dsgd_step(cfg.eta0, cfg.sigma0, read_at);
    xs.resize(ex.size());
    g.resize(ex.size());
    for (std::size_t k = 0; k < ex.size(); ++k) {
      xs[k] = shared.load(ex.indices[k]);
      if (!detail::within_bound(xs[k])) {
        fail(std::make_exception_ptr(DivergenceError(
            read_at, detail::checked_norm(shared.snapshot()),
            fmt::format("sgd diverged at step {}", read_at))));
        return;
      }
    }
    component_gradient_on_support(p, i, xs, g);
    for (double& v : g) v = -(eta * v);
    apply_update_lockfree(shared, ex.indices, g);
    const std::uint64_t t = shared.counter.fetch_add(1, std::memory_order_acq_rel);
    lag_max[w] = std::max(lag_max[w], t - read_at);
  }

  void end_epoch() {
    if (abort.load()) {
      stop.store(true);
      return;
    }
    std::vector<double> x = shared.snapshot();
    const double norm = detail::checked_norm(x);
    if (!(norm <= detail::kDivergenceBound)) {
      throw DivergenceError(epoch_end, norm,
                            fmt::format("sgd diverged by step {}", epoch_end));
    }
    ++epochs;
    TraceRow row;
    row.epoch = epochs;
    row.wall_seconds = clock.seconds();
    clock.pause();
    row.objective = full_objective(p, x);
    row.objective_last = row.objective;
    for (std::uint64_t& l : lag_max) {
      row.max_staleness = std::max(row.max_staleness, l);
      l = 0;
    }
    bool keep_going = true;
    if (observer) keep_going = observer(row, x);
    trace.rows.push_back(row);
    if (!keep_going || epochs >= cfg.epochs) {
      stop.store(true);
    } else {
      epoch_end += cfg.epoch_len;
      claimed.store(epoch_end - cfg.epoch_len);
    }
    clock.resume();
  }

  void worker(std::size_t w, std::barrier<BaselineCompletion>& sync) {
    auto rng = rng::index_stream(cfg.seed, w);
    std::uniform_int_distribution<std::size_t> idx(0, p.n() - 1);
    std::vector<double> xs;
    std::vector<double> g;
    while (!stop.load()) {
      for (;;) {
        if (abort.load(std::memory_order_relaxed)) break;
        if (claimed.fetch_add(1) >= epoch_end) break;
        step(idx(rng), xs, g, w);
      }
      sync.arrive_and_wait();
    }
  }

  const Problem& p;
  BaselineConfig cfg;
  SharedParams shared;
  const RowObserver& observer;
  std::vector<std::uint64_t> lag_max;
  ConvergenceTrace trace;
  Stopwatch clock;
  std::atomic<std::uint64_t> claimed{0};
  std::uint64_t epoch_end = 0;
  std::uint64_t epochs = 0;
  std::atomic<bool> stop{false};
  std::atomic<bool> abort{false};
  std::mutex mu;
  std::exception_ptr error;
};

void BaselineCompletion::operator()() noexcept {
  try {
    run->end_epoch();
  } catch (...) {
    run->fail(std::current_exception());
    run->stop.store(true);
  }
}

}  // namespace

ConvergenceTrace run_baseline_sgd(const Problem& p, const BaselineConfig& cfg,
                                  std::span<const double> x0,
                                  const RowObserver& observer) {
  if (!(cfg.eta0 > 0.0)) throw ConfigError("baseline needs eta0 > 0");
  if (cfg.variant == SgdVariant::dsgd && !(cfg.sigma0 > 0.0)) {
    throw ConfigError("dsgd needs sigma0 > 0");
  }
  if (cfg.threads == 0 || cfg.epoch_len == 0) {
    throw ConfigError("baseline needs threads >= 1 and epoch length >= 1");
  }
  if (x0.size() != p.dim()) throw ConfigError("x0 has the wrong length");
  ConvergenceTrace empty;
  empty.initial_objective = full_objective(p, x0);
  if (cfg.epochs == 0) return empty;

  BaselineRun run(p, cfg, x0, observer);
  run.trace.initial_objective = empty.initial_objective;
  run.epoch_end = cfg.epoch_len;
  std::barrier<BaselineCompletion> sync(static_cast<std::ptrdiff_t>(cfg.threads),
                                        BaselineCompletion{&run});
  run.clock = Stopwatch();
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < cfg.threads; ++w) {
      pool.emplace_back([&run, &sync, w] { run.worker(w, sync); });
    }
  }
  if (run.error) std::rethrow_exception(run.error);
  run.trace.metadata["solver"] = std::string(to_string(cfg.variant));
  run.trace.metadata["eta0"] = format_real(cfg.eta0);
  if (cfg.variant == SgdVariant::dsgd) run.trace.metadata["sigma0"] = format_real(cfg.sigma0);
  run.trace.metadata["threads"] = std::to_string(cfg.threads);
  return std::move(run.trace);
}

std::vector<double> default_step_grid(double L) {
  std::vector<double> grid;
  for (int k = -6; k <= 1; ++k) grid.push_back(std::pow(10.0, k / 2.0) / L);
  return grid;
}

TuneResult tune_baseline(const Problem& p, BaselineConfig cfg,
                         std::span<const double> grid, double f_star,
                         std::span<const double> x0) {
  if (grid.empty()) throw ConfigError("empty step-size grid");
  TuneResult out;
  out.grid.assign(grid.begin(), grid.end());
  double best = INFINITY;
  for (double eta0 : grid) {
    cfg.eta0 = eta0;
    double final_gap = kUnset;
    try {
      const ConvergenceTrace t = run_baseline_sgd(p, cfg, x0);
      if (!t.rows.empty()) final_gap = t.rows.back().objective - f_star;
    } catch (const DivergenceError&) {
    }
    out.final_suboptimality.push_back(final_gap);
    if (final_gap < best) {
      best = final_gap;
      out.eta0 = eta0;
    }
  }
  if (!(best < INFINITY)) {
    throw NumericalError("every step size in the baseline grid diverged");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observers and aggregation

EpochObserver tracking_observer(double f_star, double target,
                                const std::vector<double>* x_star) {
  return [f_star, target, x_star](EpochView& v) {
    v.row.suboptimality = v.row.objective - f_star;
    if (x_star != nullptr && v.state.tracks_anchor_points()) {
      v.row.lyapunov_g = v.state.lyapunov_g(*x_star);
    }
    return !(v.row.suboptimality <= target);
  };
}

double median(std::vector<double> values) {
  if (values.empty()) return kUnset;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

ConvergenceTrace aggregate_traces(std::span<const ConvergenceTrace> traces) {
  ConvergenceTrace out;
  if (traces.empty()) return out;
  std::size_t rows = traces.front().rows.size();
  for (const auto& t : traces) rows = std::min(rows, t.rows.size());
  const double count = static_cast<double>(traces.size());
  double initial = 0.0;
  for (const auto& t : traces) initial += t.initial_objective;
  out.initial_objective = initial / count;
  for (std::size_t k = 0; k < rows; ++k) {
    TraceRow row;
    row.epoch = k + 1;
    std::vector<double> walls;
    row.objective = row.objective_last = row.suboptimality = row.lyapunov_g = 0.0;
    for (const auto& t : traces) {
      const TraceRow& r = t.rows[k];
      walls.push_back(r.wall_seconds);
      row.objective += r.objective / count;
      row.objective_last += r.objective_last / count;
      row.suboptimality += r.suboptimality / count;
      row.lyapunov_g += r.lyapunov_g / count;
      row.max_staleness = std::max(row.max_staleness, r.max_staleness);
    }
    row.wall_seconds = median(std::move(walls));
    out.rows.push_back(row);
  }
  out.metadata = traces.front().metadata;
  out.metadata["seeds"] = std::to_string(traces.size());
  return out;
}

double time_to_target(const ConvergenceTrace& trace, double target) {
  for (const TraceRow& r : trace.rows) {
    if (r.suboptimality <= target) return r.wall_seconds;
  }
  return kUnset;
}

std::uint64_t epochs_to_target(const ConvergenceTrace& trace, double target) {
  for (const TraceRow& r : trace.rows) {
    if (r.suboptimality <= target) return r.epoch;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Speedup

SpeedupTable measure_speedup(const Problem& p, const SpeedupPlan& plan,
                             std::span<const double> x0, double f_star) {
  if (plan.seeds.empty()) throw ConfigError("speedup needs at least one seed");
  std::vector<std::size_t> grid = plan.threads;
  grid.push_back(1);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() == 0) throw ConfigError("thread counts must be positive");

  SpeedupTable table;
  double base_time = kUnset;
  for (std::size_t threads : grid) {
    std::vector<double> times;
    for (std::uint64_t seed : plan.seeds) {
      AsyncConfig cfg = plan.base;
      cfg.threads = threads;
      cfg.base.seed = seed;
      const AsyncResult r =
          run_async(p, cfg, x0, tracking_observer(f_star, plan.target));
      const double t = time_to_target(r.trace, plan.target);
      times.push_back(std::isnan(t) ? INFINITY : t);
    }
    SpeedupRow row;
    row.threads = threads;
    const double med = median(times);
    row.reached = std::isfinite(med);
    if (threads == 1) {
      if (!row.reached) {
        throw NumericalError(fmt::format(
            "target {:.1e} not reached with one thread within the epoch budget",
            plan.target));
      }
      base_time = med;
    }
    if (row.reached) {
      row.median_seconds = med;
      row.speedup = base_time / med;
    }
    table.rows.push_back(row);
  }
  table.metadata["mode"] = std::string(to_string(plan.base.mode));
  table.metadata["schedule"] = std::string(to_string(plan.base.base.schedule.kind));
  table.metadata["target"] = format_real(plan.target);
  table.metadata["seeds"] = std::to_string(plan.seeds.size());
  table.metadata["timing_includes_full_gradient"] = "true";
  return table;
}

// ---------------------------------------------------------------------------
// Experiment plans

namespace {

bool is_baseline(const std::string& algorithm) {
  return algorithm == "csgd" || algorithm == "dsgd";
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

nlohmann::json real_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

ExperimentPlan parse_plan(const nlohmann::json& j) {
  try {
    ExperimentPlan plan;
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("path")) plan.data.path = d.at("path").get<std::string>();
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        SyntheticSpec spec;
        read_opt(s, "n", spec.n);
        read_opt(s, "dim", spec.dim);
        read_opt(s, "nnz", spec.nnz_per_row);
        read_opt(s, "flip", spec.flip_probability);
        read_opt(s, "seed", spec.seed);
        plan.data.synthetic = spec;
      }
      read_opt(d, "normalize", plan.data.normalize);
    }
    if (!plan.data.path && !plan.data.synthetic) {
      throw ConfigError("plan needs dataset.path or dataset.synthetic");
    }
    read_opt(j, "lambda", plan.lambda);
    if (j.contains("cond")) plan.condition = j.at("cond").get<std::string>();
    if (j.contains("smoothness")) plan.smoothness = j.at("smoothness").get<std::string>();
    read_opt(j, "target_accuracy", plan.target_accuracy);
    read_opt(j, "reference_tol", plan.reference_tol);
    read_opt(j, "seeds", plan.seeds);
    if (j.contains("output_dir")) plan.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("speedup")) {
      const auto& s = j.at("speedup");
      read_opt(s, "threads", plan.speedup_threads);
      read_opt(s, "entry", plan.speedup_entry);
    }
    for (const auto& e : j.value("entries", nlohmann::json::array())) {
      PlanEntry entry;
      read_opt(e, "algorithm", entry.algorithm);
      entry.name = e.value("name", entry.algorithm);
      read_opt(e, "threads", entry.threads);
      if (e.contains("mode")) entry.mode = parse_lock_mode(e.at("mode").get<std::string>());
      read_opt(e, "eta", entry.eta);
      read_opt(e, "m", entry.m);
      read_opt(e, "epochs", entry.epochs);
      read_opt(e, "pick", entry.pick);
      read_opt(e, "kappa", entry.kappa);
      read_opt(e, "jit", entry.jit);
      read_opt(e, "S", entry.saga_fraction);
      read_opt(e, "frequency", entry.frequency);
      read_opt(e, "sigma0", entry.sigma0);
      read_opt(e, "eta_grid", entry.eta_grid);
      plan.entries.push_back(std::move(entry));
    }
    if (!(plan.target_accuracy > 1e-15)) {
      throw ConfigError(fmt::format("target accuracy {} is below the numerical floor",
                                    plan.target_accuracy));
    }
    if (plan.seeds.empty()) throw ConfigError("plan needs at least one seed");
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed plan: {}", e.what()));
  }
}

nlohmann::json plan_to_json(const ExperimentPlan& plan) {
  nlohmann::json dataset = {{"normalize", plan.data.normalize}};
  if (plan.data.path) dataset["path"] = plan.data.path->string();
  if (plan.data.synthetic) {
    const SyntheticSpec& s = *plan.data.synthetic;
    dataset["synthetic"] = {{"n", s.n},
                            {"dim", s.dim},
                            {"nnz", s.nnz_per_row},
                            {"flip", s.flip_probability},
                            {"seed", s.seed}};
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const PlanEntry& e : plan.entries) {
    entries.push_back({{"name", e.name},
                       {"algorithm", e.algorithm},
                       {"threads", e.threads},
                       {"mode", std::string(to_string(e.mode))},
                       {"eta", e.eta},
                       {"m", e.m},
                       {"epochs", e.epochs},
                       {"pick", e.pick},
                       {"kappa", e.kappa},
                       {"jit", e.jit},
                       {"S", e.saga_fraction},
                       {"frequency", e.frequency},
                       {"sigma0", e.sigma0},
                       {"eta_grid", e.eta_grid}});
  }
  nlohmann::json j = {{"dataset", dataset},
                      {"lambda", plan.lambda},
                      {"target_accuracy", plan.target_accuracy},
                      {"reference_tol", plan.reference_tol},
                      {"seeds", plan.seeds},
                      {"output_dir", plan.output_dir.string()},
                      {"entries", entries},
                      {"speedup",
                       {{"threads", plan.speedup_threads}, {"entry", plan.speedup_entry}}}};
  if (plan.condition) j["cond"] = *plan.condition;
  if (plan.smoothness) j["smoothness"] = *plan.smoothness;
  return j;
}

SparseDataset load_data(const DataSource& source) {
  if (source.path) {
    SparseDataset ds = load_libsvm(*source.path);
    return source.normalize ? normalize_rows(ds) : ds;
  }
  if (source.synthetic) return generate_synthetic(*source.synthetic);
  throw ConfigError("no dataset source given");
}

Problem build_problem(const ExperimentPlan& plan,
                      std::shared_ptr<const SparseDataset> data) {
  const SymbolTable base{{"n", static_cast<double>(data->size())},
                         {"d", static_cast<double>(data->dim())}};
  const double lambda = plan.condition
                            ? lambda_for_condition(*data, resolve_real(*plan.condition, base))
                            : resolve_real(plan.lambda, base);
  std::optional<double> smoothness;
  if (plan.smoothness) smoothness = resolve_real(*plan.smoothness, base);
  return make_problem(std::move(data), lambda, smoothness);
}

SymbolTable problem_symbols(const Problem& p) {
  return {{"n", static_cast<double>(p.n())},
          {"d", static_cast<double>(p.dim())},
          {"L", p.smoothness},
          {"lambda", p.lambda},
          {"lambda_sc", p.strong_convexity},
          {"delta", p.data->delta()}};
}

AsyncConfig entry_config(const PlanEntry& entry, const Problem& p,
                         std::uint64_t seed) {
  SymbolTable sym = problem_symbols(p);
  const std::uint64_t m = resolve_count(entry.m, sym);
  sym["m"] = static_cast<double>(m);
  const double eta = resolve_real(entry.eta, sym);
  sym["eta"] = eta;

  AsyncConfig cfg;
  cfg.threads = entry.threads;
  cfg.mode = entry.mode;
  SolverConfig& base = cfg.base;
  base.eta = eta;
  base.epochs = entry.epochs;
  base.seed = seed;
  base.jit = entry.jit;
  const ScheduleKind kind = parse_schedule_kind(entry.algorithm);
  switch (kind) {
    case ScheduleKind::svrg: base.schedule = ScheduleSpec::svrg(m); break;
    case ScheduleKind::saga: base.schedule = ScheduleSpec::saga(m); break;
    case ScheduleKind::sag: base.schedule = ScheduleSpec::sag(m); break;
    case ScheduleKind::gd: base.schedule = ScheduleSpec::gd(m); break;
    case ScheduleKind::hsag:
      base.schedule = ScheduleSpec::hsag_random(m, p.n(), entry.saga_fraction, seed,
                                                resolve_count(entry.frequency, sym));
      break;
  }
  if (entry.pick == "geometric") {
    base.pick = PickRule::geometric(resolve_real(entry.kappa, sym));
  } else if (entry.pick == "uniform") {
    base.pick = PickRule::uniform();
  } else if (entry.pick == "last") {
    base.pick = PickRule::last();
  } else {
    throw ConfigError(fmt::format("unknown pick rule '{}'", entry.pick));
  }
  return cfg;
}

nlohmann::json certificate_to_json(const CertificateInputs& in,
                                   const RateCertificate& cert) {
  auto check_json = [](const TheoremCheck& c) {
    nlohmann::json conds = nlohmann::json::array();
    for (const Condition& k : c.conditions) {
      conds.push_back({{"name", k.name},
                       {"holds", k.holds},
                       {"lhs", real_or_null(k.lhs)},
                       {"rhs", real_or_null(k.rhs)}});
    }
    return nlohmann::json{{"feasible", c.feasible},
                          {"violated", c.violated()},
                          {"conditions", conds}};
  };
  nlohmann::json j;
  j["inputs"] = {{"L", in.L},     {"lambda", in.lambda}, {"n", in.n},
                 {"m", in.m},     {"eta", in.eta},       {"kappa", in.kappa},
                 {"beta", in.beta}, {"c", in.c},         {"delta", in.delta},
                 {"tau", in.tau}};
  if (cert.thm1.evaluated) {
    j["thm1"] = check_json(cert.thm1);
    j["thm1"]["gamma"] = real_or_null(cert.gamma);
    j["thm1"]["theta"] = real_or_null(cert.theta);
    j["thm1"]["theta_bar"] = real_or_null(cert.theta_bar);
  }
  if (cert.thm2.evaluated) {
    j["thm2"] = check_json(cert.thm2);
    j["thm2"]["theta_s"] = real_or_null(cert.theta_s);
  }
  if (cert.thm3.evaluated) {
    j["thm3"] = check_json(cert.thm3);
    j["thm3"]["zeta"] = real_or_null(cert.zeta);
    j["thm3"]["gamma_a"] = real_or_null(cert.gamma_a);
    j["thm3"]["theta_a"] = real_or_null(cert.theta_a);
    j["thm3"]["theta_bar_a"] = real_or_null(cert.theta_bar_a);
  }
  return j;
}

PlanOutputs run_plan(const ExperimentPlan& plan) {
  auto data = std::make_shared<const SparseDataset>(load_data(plan.data));
  const Problem p = build_problem(plan, data);
  const std::filesystem::path& out_dir = plan.output_dir;
  std::filesystem::create_directories(out_dir);

  PlanOutputs outputs;
  outputs.reference = reference_optimum(p, plan.reference_tol);
  const double f_star = outputs.reference.f;
  const std::vector<double> x0(p.dim(), 0.0);
  const double nd = static_cast<double>(p.n());

  nlohmann::json resolved_entries = nlohmann::json::object();
  nlohmann::json certificates = nlohmann::json::object();

  for (const PlanEntry& entry : plan.entries) {
    std::vector<ConvergenceTrace> runs;
    nlohmann::json resolved;
    if (is_baseline(entry.algorithm)) {
      SymbolTable sym = problem_symbols(p);
      const std::uint64_t m = resolve_count(entry.m, sym);
      BaselineConfig cfg;
      cfg.variant = parse_sgd_variant(entry.algorithm);
      cfg.sigma0 = entry.sigma0 > 0.0 ? entry.sigma0 : nd;
      cfg.threads = entry.threads;
      cfg.epochs = entry.epochs;
      cfg.epoch_len = m;
      cfg.seed = plan.seeds.front();
      const std::vector<double> grid =
          entry.eta_grid.empty() ? default_step_grid(p.smoothness) : entry.eta_grid;
      const TuneResult tuned = tune_baseline(p, cfg, grid, f_star, x0);
      cfg.eta0 = tuned.eta0;
      for (std::uint64_t seed : plan.seeds) {
        cfg.seed = seed;
        runs.push_back(run_baseline_sgd(p, cfg, x0, [f_star](TraceRow& row, auto) {
          row.suboptimality = row.objective - f_star;
          return true;
        }));
      }
      resolved = {{"m", m}, {"eta0", cfg.eta0}, {"sigma0", cfg.sigma0},
                  {"eta_grid", grid}, {"grid_final_suboptimality", nlohmann::json::array()}};
      for (double v : tuned.final_suboptimality) {
        resolved["grid_final_suboptimality"].push_back(real_or_null(v));
      }
    } else {
      for (std::uint64_t seed : plan.seeds) {
        const AsyncConfig cfg = entry_config(entry, p, seed);
        if (cfg.threads == 1 && entry.mode == LockMode::lock_free) {
          runs.push_back(solve(p, cfg.base, x0, tracking_observer(f_star)).trace);
        } else {
          runs.push_back(run_async(p, cfg, x0, tracking_observer(f_star)).trace);
        }
      }
      const AsyncConfig cfg = entry_config(entry, p, plan.seeds.front());
      std::uint64_t tau = 0;
      for (const auto& t : runs) {
        for (const auto& r : t.rows) tau = std::max(tau, r.max_staleness);
      }
      CertificateInputs in;
      in.L = p.smoothness;
      in.lambda = p.strong_convexity;
      in.n = p.n();
      in.m = cfg.base.m();
      in.eta = cfg.base.eta;
      in.kappa = cfg.base.pick.kind == PickKind::geometric
                     ? cfg.base.pick.kappa
                     : 4.0 / (in.lambda * in.eta);
      in.beta = (2.0 * in.lambda * nd + in.L) / in.L;
      in.c = 2.0 / (in.eta * nd);
      in.delta = p.data->delta();
      in.tau = tau;
      certificates[entry.name] = certificate_to_json(in, certificate_all(in));
      resolved = {{"m", in.m}, {"eta", in.eta}, {"kappa", in.kappa}, {"seed_count", plan.seeds.size()}};
    }
    ConvergenceTrace agg = aggregate_traces(runs);
    agg.metadata["entry"] = entry.name;
    agg.metadata["target_accuracy"] = format_real(plan.target_accuracy);
    agg.metadata["timing_includes_full_gradient"] = "true";
    for (const auto& t : runs) {
      for (const auto& r : t.rows) {
        if (r.suboptimality < -1e-12) agg.metadata["reference_violation"] = "true";
      }
    }
    write_trace_csv(agg, out_dir / fmt::format("trace_{}.csv", entry.name));
    nlohmann::json tj = to_json(agg);
    tj["plan_entry"] = resolved;
    write_json(tj, out_dir / fmt::format("trace_{}.json", entry.name));
    resolved_entries[entry.name] = resolved;
    outputs.traces[entry.name] = std::move(agg);
  }

  if (!plan.speedup_threads.empty()) {
    const auto it = std::find_if(plan.entries.begin(), plan.entries.end(),
                                 [&](const PlanEntry& e) { return e.name == plan.speedup_entry; });
    if (it == plan.entries.end() || is_baseline(it->algorithm)) {
      throw ConfigError(fmt::format("speedup entry '{}' is not a solver entry",
                                    plan.speedup_entry));
    }
    SpeedupPlan sp;
    sp.base = entry_config(*it, p, plan.seeds.front());
    sp.threads = plan.speedup_threads;
    sp.seeds = plan.seeds;
    sp.target = plan.target_accuracy;
    SpeedupTable table = measure_speedup(p, sp, x0, f_star);
    table.metadata["entry"] = it->name;
    write_speedup_csv(table, out_dir / "speedup.csv");
    write_json(to_json(table), out_dir / "speedup.json");
    outputs.speedup = std::move(table);
  }

  write_json(certificates, out_dir / "certificate.json");
  nlohmann::json resolved = plan_to_json(plan);
  resolved["resolved"] = {{"n", p.n()},
                          {"d", p.dim()},
                          {"lambda", p.lambda},
                          {"lambda_sc", p.strong_convexity},
                          {"L", p.smoothness},
                          {"delta", p.data->delta()},
                          {"f_star", f_star},
                          {"reference_grad_norm", outputs.reference.grad_norm},
                          {"entries", resolved_entries}};
  write_json(resolved, out_dir / "plan_resolved.json");
  return outputs;
}

}  // namespace asvr
