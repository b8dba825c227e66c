// SPDX-License-Identifier: Apache-2.0
#include "asvr/theory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "asvr/error.hpp"

namespace asvr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Condition le(std::string name, double lhs, double rhs) {
  return {std::move(name), lhs <= rhs, lhs, rhs};
}
Condition lt(std::string name, double lhs, double rhs) {
  return {std::move(name), lhs < rhs, lhs, rhs};
}

void finish(TheoremCheck& check) {
  check.evaluated = true;
  check.feasible = std::all_of(check.conditions.begin(), check.conditions.end(),
                               [](const Condition& c) { return c.holds; });
}

void add_input_checks(TheoremCheck& check, const CertificateInputs& in,
                      bool needs_kappa) {
  const double smallest = std::min({in.L, in.lambda, in.eta,
                                    static_cast<double>(in.n),
                                    static_cast<double>(in.m)});
  check.conditions.push_back(lt("positive parameters", 0.0, smallest));
  if (needs_kappa) {
    check.conditions.push_back(lt("kappa above one", 1.0, in.kappa));
    check.conditions.push_back(lt("beta positive", 0.0, in.beta));
    check.conditions.push_back(lt("c positive", 0.0, in.c));
  }
}

}  // namespace

std::string TheoremCheck::violated() const {
  for (const Condition& c : conditions) {
    if (!c.holds) return c.name;
  }
  return {};
}

double geometric_decay(double kappa, double p) {
  return std::exp(p * std::log1p(-1.0 / kappa));
}

RateCertificate certificate_thm1(const CertificateInputs& in) {
  RateCertificate out;
  TheoremCheck& check = out.thm1;
  add_input_checks(check, in, true);
  const double n = static_cast<double>(in.n);
  const double q = geometric_decay(in.kappa, static_cast<double>(in.m));
  const double bracket = 2.0 * in.c * in.eta * (1.0 - in.L * in.eta * (1.0 + in.beta)) -
                         1.0 / n - 2.0 * in.c / (in.kappa * in.lambda);
  out.gamma = in.kappa * (1.0 - q) * bracket;
  const double first =
      2.0 * in.c * q / (out.gamma * in.lambda) +
      (2.0 * in.L * in.c * in.eta * in.eta / out.gamma) * (1.0 + 1.0 / in.beta) *
          in.kappa * (1.0 - q);
  out.theta = std::max(first, q);
  out.theta_bar = out.theta * (1.0 + 1.0 / out.gamma);

  check.conditions.push_back(
      le("step-size condition",
         1.0 / in.kappa + 2.0 * in.L * in.c * in.eta * in.eta * (1.0 + 1.0 / in.beta),
         1.0 / n));
  check.conditions.push_back(lt("gamma positive", 0.0, out.gamma));
  check.conditions.push_back(lt("theta below one", out.theta, 1.0));
  finish(check);
  return out;
}

RateCertificate certificate_thm2(const CertificateInputs& in) {
  RateCertificate out;
  TheoremCheck& check = out.thm2;
  add_input_checks(check, in, false);
  const double tau = static_cast<double>(in.tau);
  const double dt2 = in.delta * tau * tau;
  const double denom = 1.0 - 2.0 * in.L * in.L * dt2 * in.eta * in.eta;
  check.conditions.push_back(lt("staleness denominator positive", 0.0, denom));
  const double a = 4.0 * in.L * (in.eta + in.L * dt2 * in.eta * in.eta) / denom;
  out.theta_s = (1.0 / (in.lambda * in.eta * static_cast<double>(in.m)) + a) / (1.0 - a);
  check.conditions.push_back(lt("contraction term below one", a, 1.0));
  check.conditions.push_back(lt("theta_s positive", 0.0, out.theta_s));
  check.conditions.push_back(lt("theta_s below one", out.theta_s, 1.0));
  if (!(denom > 0.0)) out.theta_s = kUnset;
  finish(check);
  return out;
}

RateCertificate certificate_thm3(const CertificateInputs& in) {
  RateCertificate out;
  TheoremCheck& check = out.thm3;
  add_input_checks(check, in, true);
  const double n = static_cast<double>(in.n);
  const double tau = static_cast<double>(in.tau);
  const double q = geometric_decay(in.kappa, static_cast<double>(in.m));
  const double inv_tau = geometric_decay(in.kappa, -tau);
  const double eta = in.eta;
  const double L = in.L;
  out.zeta = in.c * eta * eta + inv_tau * in.c * L * in.delta * tau * tau * eta * eta * eta;
  const double stale = 96.0 * out.zeta * L * tau / n * inv_tau;
  const double bracket = 2.0 * in.c * eta - 8.0 * out.zeta * L * (1.0 + in.beta) -
                         2.0 * in.c / (in.kappa * in.lambda) - stale - 1.0 / n;
  out.gamma_a = in.kappa * (1.0 - q) * bracket;
  const double first = 2.0 * in.c / (out.gamma_a * in.lambda) * q +
                       8.0 * out.zeta * L * (1.0 + 1.0 / in.beta) / out.gamma_a *
                           in.kappa * (1.0 - q);
  out.theta_a = std::max(first, q);
  out.theta_bar_a = out.theta_a * (1.0 + 1.0 / out.gamma_a);

  check.conditions.push_back(
      le("step-size condition",
         1.0 / in.kappa + 8.0 * out.zeta * L * (1.0 + 1.0 / in.beta) + stale, 1.0 / n));
  const double eta_bound =
      in.delta * tau * tau > 0.0
          ? geometric_decay(in.kappa, static_cast<double>(in.m) - 1.0) /
                (12.0 * L * L * in.delta * tau * tau)
          : kInf;
  check.conditions.push_back(le("eta-squared bound", eta * eta, eta_bound));
  check.conditions.push_back(lt("gamma_a positive", 0.0, out.gamma_a));
  check.conditions.push_back(lt("theta_a below one", out.theta_a, 1.0));
  finish(check);
  return out;
}

RateCertificate certificate_all(const CertificateInputs& in) {
  RateCertificate out = certificate_thm1(in);
  const RateCertificate two = certificate_thm2(in);
  const RateCertificate three = certificate_thm3(in);
  out.theta_s = two.theta_s;
  out.thm2 = two.thm2;
  out.zeta = three.zeta;
  out.gamma_a = three.gamma_a;
  out.theta_a = three.theta_a;
  out.theta_bar_a = three.theta_bar_a;
  out.thm3 = three.thm3;
  return out;
}

namespace {

CertificateInputs sync_recipe(double L, double lambda, std::uint64_t n,
                              std::uint64_t m) {
  const double nd = static_cast<double>(n);
  CertificateInputs in;
  in.L = L;
  in.lambda = lambda;
  in.n = n;
  in.m = m;
  in.eta = 1.0 / (16.0 * (lambda * nd + L));
  in.kappa = 4.0 / (lambda * in.eta);
  in.beta = (2.0 * lambda * nd + L) / L;
  in.c = 2.0 / (in.eta * nd);
  return in;
}

// eta = (1 - lambda eta / 4)^m / (64 (lambda n + L)), since kappa = 4/(lambda eta).
// Newton-weighted relaxation of the fixed-point map, started from the
// synchronous step size.
std::pair<double, std::size_t> async_step_fixed_point(double L, double lambda,
                                                      std::uint64_t n,
                                                      std::uint64_t m) {
  const double scale = 64.0 * (lambda * static_cast<double>(n) + L);
  const double md = static_cast<double>(m);
  auto map = [&](double eta) {
    return std::exp(md * std::log1p(-lambda * eta / 4.0)) / scale;
  };
  double eta = 1.0 / (16.0 * (lambda * static_cast<double>(n) + L));
  for (std::size_t it = 1; it <= 1000; ++it) {
    const double f = map(eta);
    const double slope = -f * md * (lambda / 4.0) / (1.0 - lambda * eta / 4.0);
    const double omega = 1.0 / (1.0 - slope);
    double next = eta + omega * (f - eta);
    if (!(next > 0.0)) next = eta / 2.0;
    if (std::abs(next - eta) <= 1e-15 * eta) return {next, it};
    eta = next;
  }
  throw NumericalError(fmt::format(
      "async step-size fixed point did not converge in 1000 iterations (m={})", m));
}

CertificateInputs async_recipe(double L, double lambda, std::uint64_t n,
                               std::uint64_t m, std::uint64_t tau, double delta,
                               std::size_t* iterations) {
  const auto [eta, its] = async_step_fixed_point(L, lambda, n, m);
  if (iterations) *iterations = its;
  const double nd = static_cast<double>(n);
  CertificateInputs in;
  in.L = L;
  in.lambda = lambda;
  in.n = n;
  in.m = m;
  in.eta = eta;
  in.kappa = 4.0 / (lambda * eta);
  in.beta = (2.0 * lambda * nd + L) / L;
  in.c = 2.0 / (eta * nd);
  in.delta = delta;
  in.tau = tau;
  return in;
}

}  // namespace

Recipe recipe_parameters(Regime regime, double L, double lambda_sc,
                         std::uint64_t n, std::optional<std::uint64_t> m,
                         std::uint64_t tau, double delta, double theta_target) {
  if (!(L > 0.0) || !(lambda_sc > 0.0) || n == 0) {
    throw ConfigError("recipe needs L > 0, lambda > 0 and n > 0");
  }
  Recipe r;
  auto build = [&](std::uint64_t mm) {
    if (regime == Regime::thm1) {
      CertificateInputs in = sync_recipe(L, lambda_sc, n, mm);
      in.tau = tau;
      in.delta = delta;
      return std::pair{in, certificate_thm1(in)};
    }
    std::size_t its = 0;
    CertificateInputs in = async_recipe(L, lambda_sc, n, mm, tau, delta, &its);
    r.iterations = its;
    return std::pair{in, certificate_thm3(in)};
  };
  auto good = [&](const RateCertificate& cert) {
    if (regime == Regime::thm1) return cert.thm1.feasible && cert.theta <= theta_target;
    return cert.thm3.feasible && cert.theta_a <= theta_target;
  };

  if (regime == Regime::thm3) {
    const double spread = std::sqrt(delta) * static_cast<double>(tau);
    if (spread >= 1.0) {
      r.warnings.push_back(fmt::format(
          "sqrt(Delta)*tau = {} >= 1: outside the analyzed sparse regime", spread));
    }
    if (n <= 9 * tau) {
      r.warnings.push_back(fmt::format("n = {} is not above 9*tau = {}", n, 9 * tau));
    }
  }

  std::uint64_t chosen = 0;
  if (m) {
    chosen = *m;
  } else {
    std::uint64_t lo = regime == Regime::thm3 ? n + 1 : 1;
    std::uint64_t hi = lo;
    while (!good(build(hi).second)) {
      if (hi > (std::uint64_t{1} << 50)) {
        throw NumericalError(fmt::format(
            "no epoch length reaches theta <= {} with this recipe", theta_target));
      }
      lo = hi + 1;
      hi *= 2;
    }
    while (lo < hi) {
      const std::uint64_t mid = lo + (hi - lo) / 2;
      if (good(build(mid).second)) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    chosen = hi;
  }
  if (regime == Regime::thm3 && chosen <= n) {
    r.warnings.push_back(fmt::format("m = {} is not above n = {}", chosen, n));
  }
  auto [in, cert] = build(chosen);
  r.inputs = in;
  r.certificate = cert;
  const TheoremCheck& check = regime == Regime::thm1 ? cert.thm1 : cert.thm3;
  if (!check.feasible) {
    r.warnings.push_back(
        fmt::format("certificate infeasible: {}", check.violated()));
  }
  return r;
}

std::optional<std::uint64_t> thm2_epoch_length(double L, double lambda_sc,
                                               double eta, double delta,
                                               std::uint64_t tau,
                                               double theta_target) {
  const double t = static_cast<double>(tau);
  const double dt2 = delta * t * t;
  const double denom = 1.0 - 2.0 * L * L * dt2 * eta * eta;
  if (!(denom > 0.0)) return std::nullopt;
  const double a = 4.0 * L * (eta + L * dt2 * eta * eta) / denom;
  const double room = theta_target * (1.0 - a) - a;
  if (!(room > 0.0)) return std::nullopt;
  const double m = std::ceil(1.0 / (lambda_sc * eta * room));
  if (!(m < 1.8e19)) return std::nullopt;
  auto mm = static_cast<std::uint64_t>(m);
  // Guard the rounding boundary with the exact certificate formula.
  auto theta_at = [&](std::uint64_t k) {
    return (1.0 / (lambda_sc * eta * static_cast<double>(k)) + a) / (1.0 - a);
  };
  while (mm > 1 && theta_at(mm - 1) <= theta_target) --mm;
  while (theta_at(mm) > theta_target) ++mm;
  return std::max<std::uint64_t>(mm, 1);
}

double empirical_rate(std::span<const double> values) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = values[k];
    if (!(v > 1e-15) || !std::isfinite(v)) break;
    xs.push_back(static_cast<double>(k));
    ys.push_back(std::log(v));
  }
  if (xs.size() < 2) {
    throw NumericalError("empirical rate needs at least two positive values");
  }
  const double count = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= count;
  my /= count;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return std::exp(sxy / sxx);
}

double empirical_rate(const ConvergenceTrace& trace) {
  std::vector<double> values;
  values.reserve(trace.rows.size());
  for (const TraceRow& row : trace.rows) values.push_back(row.suboptimality);
  return empirical_rate(values);
}

}  // namespace asvr
