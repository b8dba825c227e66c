// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asvr/trace.hpp"

namespace asvr {

/// Symbols shared by the rate theorems. `lambda` is the strong-convexity
/// modulus (lambda_sc), not the regularization weight.
struct CertificateInputs {
  double L = 0.0;
  double lambda = 0.0;
  std::uint64_t n = 0;
  std::uint64_t m = 0;
  double eta = 0.0;
  double kappa = 0.0;
  double beta = 0.0;
  double c = 0.0;
  double delta = 0.0;
  std::uint64_t tau = 0;
};

struct Condition {
  std::string name;
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct TheoremCheck {
  bool evaluated = false;
  bool feasible = false;
  std::vector<Condition> conditions;

  /// First violated condition, or empty.
  std::string violated() const;
};

struct RateCertificate {
  double gamma = kUnset;
  double theta = kUnset;
  double theta_bar = kUnset;
  TheoremCheck thm1;

  double theta_s = kUnset;
  TheoremCheck thm2;

  double zeta = kUnset;
  double gamma_a = kUnset;
  double theta_a = kUnset;
  double theta_bar_a = kUnset;
  TheoremCheck thm3;
};

/// (1 - 1/kappa)^p evaluated in the log domain.
double geometric_decay(double kappa, double p);

RateCertificate certificate_thm1(const CertificateInputs& in);
RateCertificate certificate_thm2(const CertificateInputs& in);
RateCertificate certificate_thm3(const CertificateInputs& in);
/// All three evaluated on the same inputs.
RateCertificate certificate_all(const CertificateInputs& in);

enum class Regime { thm1, thm3 };

struct Recipe {
  CertificateInputs inputs;
  RateCertificate certificate;
  std::vector<std::string> warnings;
  /// Fixed-point iterations used (thm3 only).
  std::size_t iterations = 0;
};

/// Parameter instantiation for the synchronous (thm1) or asynchronous
/// (thm3) hybrid-schedule theorem. Without `m`, the smallest m whose
/// certificate reaches `theta_target` is chosen.
/// Throws NumericalError when the thm3 fixed point fails to converge.
Recipe recipe_parameters(Regime regime, double L, double lambda_sc,
                         std::uint64_t n, std::optional<std::uint64_t> m = {},
                         std::uint64_t tau = 0, double delta = 0.0,
                         double theta_target = 0.5);

/// Smallest m with theta_s <= theta_target for the async svrg bound, or
/// nullopt when no m reaches it.
std::optional<std::uint64_t> thm2_epoch_length(double L, double lambda_sc,
                                               double eta, double delta,
                                               std::uint64_t tau,
                                               double theta_target);

/// Fitted per-epoch contraction factor exp(slope of log values); values are
/// truncated at the first entry <= 1e-15.
double empirical_rate(std::span<const double> values);
/// Same, on the trace's suboptimality column.
double empirical_rate(const ConvergenceTrace& trace);

}  // namespace asvr
