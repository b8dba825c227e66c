// SPDX-License-Identifier: Apache-2.0
// Command-line front end: solve, async-solve, certify, speedup, gen-data,
// ref-opt.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "asvr/async_solver.hpp"
#include "asvr/dataset.hpp"
#include "asvr/error.hpp"
#include "asvr/harness.hpp"
#include "asvr/solver.hpp"
#include "asvr/theory.hpp"
#include "asvr/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitNumerical = 2;

constexpr const char* kSymbolFooter =
    "Symbols: eta = --eta (step size), m = --m (epoch length), "
    "kappa = --kappa, beta = --beta, c = --c, tau = --tau / --tau-cap "
    "(staleness), Delta = --delta (sparsity, max_j d_j / n), lambda = "
    "--lambda (regularization weight; theorems use lambda_sc = 2 lambda).\n"
    "Expressions may use n, d, L, lambda, lambda_sc, delta, m, eta, e.g. "
    "--m 2n --eta 0.1/L --lambda 1/n.";

struct DataOpts {
  std::string path;
  std::size_t n = 1000;
  std::size_t d = 100;
  std::size_t nnz = 10;
  double flip = 0.1;
  std::uint64_t data_seed = 1;
  bool no_normalize = false;
  std::string lambda = "1/n";
  std::string cond;
  std::string smoothness;
};

struct SolveOpts {
  std::string schedule = "svrg";
  std::string m = "2n";
  std::string eta = "0.1/L";
  std::uint64_t epochs = 30;
  std::string pick = "last";
  std::string kappa = "4/(lambda_sc*eta)";
  double saga_fraction = 0.5;
  std::string frequency = "m";
  std::uint64_t seed = 1;
  bool jit = false;
  std::string out = ".";
  bool reference = false;
  double target = 1e-10;
  double ref_tol = 1e-12;
  std::size_t threads = 1;
  std::string mode = "lock_free";
  std::int64_t tau_cap = -1;
  bool no_barrier = false;
  bool split_read = false;
};

void add_data_opts(CLI::App* sub, DataOpts& o) {
  sub->add_option("--data", o.path, "LIBSVM file; without it a synthetic set is generated");
  sub->add_option("--n", o.n, "synthetic: number of examples n");
  sub->add_option("--d", o.d, "synthetic: dimension d");
  sub->add_option("--nnz", o.nnz, "synthetic: nonzeros per row");
  sub->add_option("--flip", o.flip, "synthetic: label flip probability");
  sub->add_option("--data-seed", o.data_seed, "synthetic: generator seed");
  sub->add_flag("--no-normalize", o.no_normalize, "keep LIBSVM rows unscaled");
  sub->add_option("--lambda", o.lambda, "regularization weight lambda (expr)");
  sub->add_option("--cond", o.cond,
                  "pick lambda so that L / lambda_sc equals this (expr, e.g. n)");
  sub->add_option("--L", o.smoothness, "override the smoothness bound L (expr)");
}

void add_solver_opts(CLI::App* sub, SolveOpts& o, bool async) {
  sub->add_option("--schedule", o.schedule, "svrg | saga | sag | gd | hsag")
      ->check(CLI::IsMember({"svrg", "saga", "sag", "gd", "hsag"}));
  sub->add_option("--m", o.m, "epoch length m (expr)");
  sub->add_option("--eta", o.eta, "step size eta (expr)");
  sub->add_option("--epochs", o.epochs, "number of epochs K");
  sub->add_option("--pick", o.pick, "iterate selection: geometric | uniform | last")
      ->check(CLI::IsMember({"geometric", "uniform", "last"}));
  sub->add_option("--kappa", o.kappa, "kappa of the geometric pick rule (expr)");
  sub->add_option("--S", o.saga_fraction, "hsag: fraction of examples in the saga set S");
  sub->add_option("--freq", o.frequency, "hsag: refresh period s_i outside S (expr)");
  sub->add_option("--seed", o.seed, "random seed");
  sub->add_flag("--jit", o.jit, "lazy two-bracket updates (svrg, hsag)");
  sub->add_option("--out", o.out, "output directory");
  sub->add_flag("--ref", o.reference, "compute f* and fill the suboptimality column");
  sub->add_option("--target", o.target, "target suboptimality");
  sub->add_option("--ref-tol", o.ref_tol, "gradient-norm tolerance of the reference solve");
  if (async) {
    sub->add_option("--threads", o.threads, "number of workers P");
    sub->add_option("--mode", o.mode, "lock_free | locked")
        ->check(CLI::IsMember({"lock_free", "locked"}));
    sub->add_option("--tau-cap", o.tau_cap, "abort when staleness exceeds tau (-1: off)");
    sub->add_flag("--no-barrier", o.no_barrier, "saga only: skip the epoch barrier");
    sub->add_flag("--split-read", o.split_read,
                  "read the anchor gradient after computing the gradient at x");
  }
}

asvr::ExperimentPlan plan_from(const DataOpts& d) {
  asvr::ExperimentPlan plan;
  if (!d.path.empty()) {
    plan.data.path = d.path;
  } else {
    asvr::SyntheticSpec spec;
    spec.n = d.n;
    spec.dim = d.d;
    spec.nnz_per_row = d.nnz;
    spec.flip_probability = d.flip;
    spec.seed = d.data_seed;
    plan.data.synthetic = spec;
  }
  plan.data.normalize = !d.no_normalize;
  plan.lambda = d.lambda;
  if (!d.cond.empty()) plan.condition = d.cond;
  if (!d.smoothness.empty()) plan.smoothness = d.smoothness;
  return plan;
}

asvr::Problem problem_from(const DataOpts& d) {
  const asvr::ExperimentPlan plan = plan_from(d);
  auto data = std::make_shared<const asvr::SparseDataset>(asvr::load_data(plan.data));
  return asvr::build_problem(plan, data);
}

asvr::PlanEntry entry_from(const SolveOpts& o) {
  asvr::PlanEntry e;
  e.name = o.schedule;
  e.algorithm = o.schedule;
  e.threads = o.threads;
  e.mode = asvr::parse_lock_mode(o.mode);
  e.eta = o.eta;
  e.m = o.m;
  e.epochs = o.epochs;
  e.pick = o.pick;
  e.kappa = o.kappa;
  e.jit = o.jit;
  e.saga_fraction = o.saga_fraction;
  e.frequency = o.frequency;
  return e;
}

/// Every option of `sub` with its effective value.
json echo_flags(const CLI::App* sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name == "--help" || name.empty()) continue;
    const std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (opt->get_expected_max() == 0) {
      flags[key] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& res = opt->results();
      if (res.size() == 1) {
        flags[key] = res.front();
      } else {
        flags[key] = res;
      }
    } else {
      flags[key] = opt->get_default_str();
    }
  }
  return flags;
}

json problem_json(const asvr::Problem& p) {
  return {{"n", p.n()},
          {"d", p.dim()},
          {"lambda", p.lambda},
          {"lambda_sc", p.strong_convexity},
          {"L", p.smoothness},
          {"delta", p.data->delta()}};
}

int run_solve(const CLI::App* sub, const DataOpts& d, const SolveOpts& o, bool async) {
  const asvr::Problem p = problem_from(d);
  const asvr::PlanEntry entry = entry_from(o);
  asvr::AsyncConfig cfg = asvr::entry_config(entry, p, o.seed);
  if (async) {
    if (o.tau_cap >= 0) cfg.tau_cap = static_cast<std::uint64_t>(o.tau_cap);
    cfg.epoch_barrier = !o.no_barrier;
    cfg.joint_read = !o.split_read;
  }
  const std::vector<double> x0(p.dim(), 0.0);
  std::optional<asvr::ReferenceOptimum> ref;
  if (o.reference) ref = asvr::reference_optimum(p, o.ref_tol);
  const double f_star = ref ? ref->f : asvr::kUnset;
  const asvr::EpochObserver observer = [f_star](asvr::EpochView& v) {
    if (!std::isnan(f_star)) v.row.suboptimality = v.row.objective - f_star;
    return true;
  };

  asvr::ConvergenceTrace trace;
  asvr::StalenessTrace staleness;
  if (async) {
    asvr::AsyncResult r = asvr::run_async(p, cfg, x0, observer);
    trace = std::move(r.trace);
    staleness = r.staleness;
  } else {
    trace = asvr::solve(p, cfg.base, x0, observer).trace;
  }

  const fs::path out = o.out;
  fs::create_directories(out);
  const fs::path csv = out / fmt::format("trace_{}.csv", o.schedule);
  asvr::write_trace_csv(trace, csv);
  json tj = asvr::to_json(trace);
  if (async) {
    tj["staleness"] = {{"histogram", staleness.histogram},
                       {"max", staleness.max_staleness},
                       {"samples", staleness.samples},
                       {"barrier_violations", staleness.barrier_violations},
                       {"barrier_passes", staleness.barrier_passes},
                       {"cas_retries", staleness.cas_retries},
                       {"claims_exact", staleness.claims_exact}};
  }
  asvr::write_json(tj, out / fmt::format("trace_{}.json", o.schedule));

  json resolved = problem_json(p);
  resolved["m"] = cfg.base.m();
  resolved["eta"] = cfg.base.eta;
  if (cfg.base.pick.kind == asvr::PickKind::geometric) resolved["kappa"] = cfg.base.pick.kappa;
  if (ref) resolved["f_star"] = ref->f;
  asvr::write_json({{"command", sub->get_name()}, {"flags", echo_flags(sub)}, {"resolved", resolved}},
                   out / "plan_resolved.json");

  const double last = trace.rows.empty() ? trace.initial_objective : trace.rows.back().objective;
  fmt::print("{} epochs, final objective {:.17g}", trace.rows.size(), last);
  if (ref) fmt::print(", suboptimality {:.3e}", last - ref->f);
  if (async) fmt::print(", max staleness {}", staleness.max_staleness);
  fmt::print("\nwrote {}\n", csv.string());
  return kExitOk;
}

struct CertifyOpts {
  std::string thm = "all";
  std::uint64_t n = 1000;
  std::string cond = "n";
  double L = 1.0;
  std::string m;
  std::string eta;
  std::string kappa;
  std::string beta;
  std::string c;
  std::string delta = "1/n";
  std::uint64_t tau = 0;
  double theta_target = 0.5;
  bool strict = false;
};

int run_certify(const CertifyOpts& o) {
  asvr::SymbolTable sym{{"n", static_cast<double>(o.n)}, {"L", o.L}};
  const double cond = asvr::resolve_real(o.cond, sym);
  const double lambda = o.L / cond;
  sym["lambda"] = lambda;
  sym["lambda_sc"] = lambda;
  const double delta = asvr::resolve_real(o.delta, sym);
  sym["delta"] = delta;
  std::optional<std::uint64_t> m;
  if (!o.m.empty()) m = asvr::resolve_count(o.m, sym);

  const asvr::Regime regime = o.thm == "3" ? asvr::Regime::thm3 : asvr::Regime::thm1;
  const asvr::Recipe recipe =
      asvr::recipe_parameters(regime, o.L, lambda, o.n, m, o.tau, delta, o.theta_target);
  asvr::CertificateInputs in = recipe.inputs;
  in.delta = delta;
  in.tau = o.tau;
  sym["m"] = static_cast<double>(in.m);
  if (!o.eta.empty()) in.eta = asvr::resolve_real(o.eta, sym);
  sym["eta"] = in.eta;
  if (!o.kappa.empty()) in.kappa = asvr::resolve_real(o.kappa, sym);
  if (!o.beta.empty()) in.beta = asvr::resolve_real(o.beta, sym);
  if (!o.c.empty()) in.c = asvr::resolve_real(o.c, sym);

  asvr::RateCertificate cert;
  if (o.thm == "1") {
    cert = asvr::certificate_thm1(in);
  } else if (o.thm == "2") {
    cert = asvr::certificate_thm2(in);
  } else if (o.thm == "3") {
    cert = asvr::certificate_thm3(in);
  } else {
    cert = asvr::certificate_all(in);
  }
  json j = asvr::certificate_to_json(in, cert);
  j["warnings"] = recipe.warnings;
  std::cout << j.dump(2) << '\n';

  if (o.strict) {
    const bool bad = (cert.thm1.evaluated && !cert.thm1.feasible) ||
                     (cert.thm2.evaluated && !cert.thm2.feasible) ||
                     (cert.thm3.evaluated && !cert.thm3.feasible);
    if (bad) {
      std::cerr << "certificate infeasible\n";
      return kExitNumerical;
    }
  }
  return kExitOk;
}

struct SpeedupOpts {
  std::vector<std::size_t> threads{1, 2, 4, 8};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

int run_speedup(const CLI::App* sub, const DataOpts& d, const SolveOpts& o,
                const SpeedupOpts& s) {
  const asvr::Problem p = problem_from(d);
  asvr::SpeedupPlan plan;
  plan.base = asvr::entry_config(entry_from(o), p, s.seeds.front());
  if (o.tau_cap >= 0) plan.base.tau_cap = static_cast<std::uint64_t>(o.tau_cap);
  plan.base.joint_read = !o.split_read;
  plan.threads = s.threads;
  plan.seeds = s.seeds;
  plan.target = o.target;
  const asvr::ReferenceOptimum ref = asvr::reference_optimum(p, o.ref_tol);
  const std::vector<double> x0(p.dim(), 0.0);
  const asvr::SpeedupTable table = asvr::measure_speedup(p, plan, x0, ref.f);

  const fs::path out = o.out;
  fs::create_directories(out);
  asvr::write_speedup_csv(table, out / "speedup.csv");
  asvr::write_json(asvr::to_json(table), out / "speedup.json");
  json resolved = problem_json(p);
  resolved["m"] = plan.base.base.m();
  resolved["eta"] = plan.base.base.eta;
  resolved["f_star"] = ref.f;
  asvr::write_json({{"command", sub->get_name()}, {"flags", echo_flags(sub)}, {"resolved", resolved}},
                   out / "plan_resolved.json");
  for (const auto& row : table.rows) {
    if (row.reached) {
      fmt::print("P={:<3} median {:.4f}s  speedup {:.3f}\n", row.threads,
                 row.median_seconds, row.speedup);
    } else {
      fmt::print("P={:<3} target not reached\n", row.threads);
    }
  }
  return kExitOk;
}

struct GenOpts {
  std::size_t n = 1000;
  std::size_t d = 100;
  std::size_t nnz = 10;
  double flip = 0.1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_gen(const GenOpts& o) {
  asvr::SyntheticSpec spec;
  spec.n = o.n;
  spec.dim = o.d;
  spec.nnz_per_row = o.nnz;
  spec.flip_probability = o.flip;
  spec.seed = o.seed;
  const asvr::SparseDataset ds = asvr::generate_synthetic(spec);
  asvr::write_libsvm(fs::path(o.out), ds);
  fmt::print("wrote {}: n={} d={} nnz={} delta={:.6g}\n", o.out, ds.size(), ds.dim(),
             ds.nnz(), ds.delta());
  return kExitOk;
}

struct RefOpts {
  double tol = 1e-12;
  std::string cache_dir;
  std::string out;
};

int run_ref(const DataOpts& d, const RefOpts& o) {
  const asvr::Problem p = problem_from(d);
  std::optional<fs::path> cache = asvr::default_cache_dir();
  if (!o.cache_dir.empty()) cache = fs::path(o.cache_dir);
  const asvr::ReferenceOptimum r = asvr::reference_optimum(p, o.tol, cache);
  if (!o.out.empty()) {
    std::FILE* f = std::fopen(o.out.c_str(), "w");
    if (f == nullptr) throw asvr::IoError(fmt::format("cannot write '{}'", o.out));
    for (double v : r.x) fmt::print(f, "{:.17g}\n", v);
    std::fclose(f);
  }
  json j = {{"key", asvr::problem_key(p)},
            {"f_star", r.f},
            {"grad_norm", r.grad_norm},
            {"from_cache", r.from_cache},
            {"epochs", r.epochs}};
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

std::string json_arg(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string joined;
    for (const auto& e : v) {
      if (!joined.empty()) joined += ',';
      joined += json_arg(e);
    }
    return joined;
  }
  return v.dump();
}

/// Appends plan-file settings as flags so they take precedence.
std::vector<std::string> with_plan(std::vector<std::string> args, const json& plan) {
  for (const auto& [key, value] : plan.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
      continue;
    }
    args.push_back(flag);
    args.push_back(json_arg(value));
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced stochastic gradient toolkit"};
  app.require_subcommand(1);
  app.footer(kSymbolFooter);
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);

  std::string plan_path;
  DataOpts data;
  SolveOpts solve_opts;
  CertifyOpts cert_opts;
  SpeedupOpts speedup_opts;
  GenOpts gen_opts;
  RefOpts ref_opts;

  auto* solve = app.add_subcommand("solve", "serial variance-reduced solve");
  add_data_opts(solve, data);
  add_solver_opts(solve, solve_opts, false);

  auto* async = app.add_subcommand("async-solve", "asynchronous multi-worker solve");
  add_data_opts(async, data);
  add_solver_opts(async, solve_opts, true);

  auto* certify = app.add_subcommand("certify", "print rate certificates as JSON");
  certify->add_option("--thm", cert_opts.thm, "1 | 2 | 3 | all")
      ->check(CLI::IsMember({"1", "2", "3", "all"}));
  certify->add_option("--n", cert_opts.n, "number of examples n");
  certify->add_option("--cond", cert_opts.cond, "condition number L / lambda (expr)");
  certify->add_option("--L", cert_opts.L, "smoothness L");
  certify->add_option("--m", cert_opts.m, "epoch length m (expr; default: smallest reaching the target)");
  certify->add_option("--eta", cert_opts.eta, "step size eta (expr; default: recipe)");
  certify->add_option("--kappa", cert_opts.kappa, "kappa > 1 (expr; default: 4/(lambda eta))");
  certify->add_option("--beta", cert_opts.beta, "beta > 0 (expr; default: (2 lambda n + L)/L)");
  certify->add_option("--c", cert_opts.c, "c > 0 (expr; default: 2/(eta n))");
  certify->add_option("--delta", cert_opts.delta, "sparsity Delta (expr)");
  certify->add_option("--tau", cert_opts.tau, "staleness bound tau");
  certify->add_option("--theta-target", cert_opts.theta_target, "rate used when choosing m");
  certify->add_flag("--strict", cert_opts.strict, "exit 2 when a certificate is infeasible");

  auto* speedup = app.add_subcommand("speedup", "time-to-target speedup table");
  add_data_opts(speedup, data);
  add_solver_opts(speedup, solve_opts, true);
  speedup->add_option("--threads-grid", speedup_opts.threads, "thread counts P")->delimiter(',');
  speedup->add_option("--seeds", speedup_opts.seeds, "seeds (median over them)")->delimiter(',');

  auto* gen = app.add_subcommand("gen-data", "write a synthetic LIBSVM dataset");
  gen->add_option("--n", gen_opts.n, "number of examples n");
  gen->add_option("--d", gen_opts.d, "dimension d");
  gen->add_option("--nnz", gen_opts.nnz, "nonzeros per row");
  gen->add_option("--flip", gen_opts.flip, "label flip probability");
  gen->add_option("--seed", gen_opts.seed, "generator seed");
  gen->add_option("--out", gen_opts.out, "output file")->required();

  auto* ref = app.add_subcommand("ref-opt", "reference optimum x*, f* (cached)");
  add_data_opts(ref, data);
  ref->add_option("--tol", ref_opts.tol, "gradient-norm tolerance");
  ref->add_option("--cache-dir", ref_opts.cache_dir, "cache directory (default: $ASVR_CACHE_DIR)");
  ref->add_option("--out", ref_opts.out, "write x* as text, one value per line");

  for (CLI::App* sub : {solve, async, certify, speedup, gen, ref}) {
    sub->footer(kSymbolFooter);
    sub->add_option("--plan", plan_path, "JSON file whose keys override flags");
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // A plan file is folded into the argument list before the real parse.
    const auto it = std::find(args.begin(), args.end(), "--plan");
    if (it != args.end() && it + 1 != args.end()) {
      const json plan = asvr::read_json(*(it + 1));
      if (plan.contains("entries")) {
        const asvr::PlanOutputs out = asvr::run_plan(asvr::parse_plan(plan));
        fmt::print("ran {} plan entries\n", out.traces.size());
        return kExitOk;
      }
      args = with_plan(args, plan);
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  } catch (const asvr::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUser;
  }

  try {
    if (solve->parsed()) return run_solve(solve, data, solve_opts, false);
    if (async->parsed()) return run_solve(async, data, solve_opts, true);
    if (certify->parsed()) return run_certify(cert_opts);
    if (speedup->parsed()) return run_speedup(speedup, data, solve_opts, speedup_opts);
    if (gen->parsed()) return run_gen(gen_opts);
    if (ref->parsed()) return run_ref(data, ref_opts);
  } catch (const asvr::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const asvr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitUser;
}
