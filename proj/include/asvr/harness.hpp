// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asvr/async_solver.hpp"
#include "asvr/dataset.hpp"
#include "asvr/objective.hpp"
#include "asvr/solver.hpp"
#include "asvr/theory.hpp"
#include "asvr/trace_io.hpp"

namespace asvr {

using SymbolTable = std::map<std::string, double, std::less<>>;

/// Evaluates products and quotients of numbers and symbols, e.g. "2n",
/// "0.1/L", "1/n", "4/(lambda*eta)". Throws ConfigError on unknown symbols.
double resolve_real(std::string_view expr, const SymbolTable& symbols);
/// resolve_real rounded up to a positive integer.
std::uint64_t resolve_count(std::string_view expr, const SymbolTable& symbols);

// ---------------------------------------------------------------------------
// Reference optimum

struct ReferenceOptimum {
  std::vector<double> x;
  double f = kUnset;
  double grad_norm = kUnset;
  bool from_cache = false;
  std::uint64_t epochs = 0;
};

/// FNV-1a hash of the dataset contents, lambda and L, as 16 hex digits.
std::string problem_key(const Problem& p);

/// Cache directory from ASVR_CACHE_DIR, if set.
std::optional<std::filesystem::path> default_cache_dir();

/// Serial svrg (eta = 0.1/L, m = 2n, last iterate) until the full gradient
/// norm is <= tol. With a cache directory the result is stored as
/// ref_opt_<key>.bin plus a JSON sidecar and reused when accurate enough.
ReferenceOptimum reference_optimum(
    const Problem& p, double tol = 1e-12,
    const std::optional<std::filesystem::path>& cache_dir = default_cache_dir(),
    std::uint64_t max_epochs = 5000);

/// Number of reference solves actually run in this process.
std::uint64_t reference_solves_performed();

// ---------------------------------------------------------------------------
// Baselines

enum class SgdVariant { csgd, dsgd };

std::string_view to_string(SgdVariant v);
SgdVariant parse_sgd_variant(std::string_view name);

struct BaselineConfig {
  SgdVariant variant = SgdVariant::csgd;
  double eta0 = 0.0;
  /// dsgd decay offset sigma_0.
  double sigma0 = 1.0;
  std::size_t threads = 1;
  std::uint64_t seed = 1;
  std::uint64_t epochs = 10;
  /// Steps between evaluations.
  std::uint64_t epoch_len = 1;
};

/// eta0 * sqrt(sigma0 / (t + sigma0)).
double dsgd_step(double eta0, double sigma0, std::uint64_t t);

/// Sees each evaluated row and the current iterate; return false to stop.
using RowObserver = std::function<bool(TraceRow&, std::span<const double>)>;

/// Lock-free plain SGD through apply_update_lockfree.
ConvergenceTrace run_baseline_sgd(const Problem& p, const BaselineConfig& cfg,
                                  std::span<const double> x0,
                                  const RowObserver& observer = {});

struct TuneResult {
  double eta0 = 0.0;
  std::vector<double> grid;
  /// Final suboptimality per grid point (NaN on divergence).
  std::vector<double> final_suboptimality;
};

/// Picks eta0 from `grid` minimizing the final suboptimality.
TuneResult tune_baseline(const Problem& p, BaselineConfig cfg,
                         std::span<const double> grid, double f_star,
                         std::span<const double> x0);

/// Default baseline grid: eta0 = 10^(k/2) / L for k = -6..1.
std::vector<double> default_step_grid(double L);

// ---------------------------------------------------------------------------
// Observers and aggregation

/// Fills suboptimality (and G~ when `x_star` is given and anchors are
/// tracked); stops once suboptimality <= target.
EpochObserver tracking_observer(double f_star, double target = kUnset,
                                const std::vector<double>* x_star = nullptr);

/// Mean objective columns, median wall time, max staleness; truncated to
/// the shortest trace.
ConvergenceTrace aggregate_traces(std::span<const ConvergenceTrace> traces);

/// Wall seconds of the first row with suboptimality <= target, or NaN.
double time_to_target(const ConvergenceTrace& trace, double target);

/// Epoch of the first row with suboptimality <= target, or 0.
std::uint64_t epochs_to_target(const ConvergenceTrace& trace, double target);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Speedup

struct SpeedupPlan {
  AsyncConfig base;
  std::vector<std::size_t> threads{1};
  std::vector<std::uint64_t> seeds{1};
  double target = 1e-10;
};

/// Time-to-target per thread count (median over seeds). Throws
/// NumericalError when the target is not reached with one thread.
SpeedupTable measure_speedup(const Problem& p, const SpeedupPlan& plan,
                             std::span<const double> x0, double f_star);

// ---------------------------------------------------------------------------
// Experiment plans

struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<SyntheticSpec> synthetic;
  bool normalize = true;
};

struct PlanEntry {
  std::string name;
  /// svrg, saga, sag, gd, hsag, csgd or dsgd.
  std::string algorithm = "svrg";
  std::size_t threads = 1;
  LockMode mode = LockMode::lock_free;
  std::string eta = "0.1/L";
  std::string m = "2n";
  std::uint64_t epochs = 30;
  std::string pick = "last";
  std::string kappa = "4/(lambda_sc*eta)";
  bool jit = false;
  double saga_fraction = 0.5;
  std::string frequency = "m";
  double sigma0 = 0.0;
  std::vector<double> eta_grid;
};

struct ExperimentPlan {
  DataSource data;
  std::string lambda = "1/n";
  std::optional<std::string> condition;
  std::optional<std::string> smoothness;
  double target_accuracy = 1e-10;
  double reference_tol = 1e-12;
  std::vector<PlanEntry> entries;
  std::vector<std::size_t> speedup_threads;
  std::string speedup_entry;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "out";
};

ExperimentPlan parse_plan(const nlohmann::json& j);
nlohmann::json plan_to_json(const ExperimentPlan& plan);

SparseDataset load_data(const DataSource& source);
Problem build_problem(const ExperimentPlan& plan,
                      std::shared_ptr<const SparseDataset> data);
SymbolTable problem_symbols(const Problem& p);

/// Solver configuration for a non-baseline entry.
AsyncConfig entry_config(const PlanEntry& entry, const Problem& p,
                         std::uint64_t seed);

/// JSON certificate over all theorems for the given inputs.
nlohmann::json certificate_to_json(const CertificateInputs& in,
                                   const RateCertificate& cert);

struct PlanOutputs {
  std::map<std::string, ConvergenceTrace> traces;
  std::optional<SpeedupTable> speedup;
  ReferenceOptimum reference;
};

/// Runs every entry, writes trace_<entry>.csv/.json, speedup.csv/.json,
/// plan_resolved.json and certificate.json into the output directory.
PlanOutputs run_plan(const ExperimentPlan& plan);

}  // namespace asvr
