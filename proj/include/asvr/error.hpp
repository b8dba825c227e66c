// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace asvr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data.
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Invalid solver, schedule, or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: divergence, non-convergence, failed fixed point.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(std::uint64_t step, double norm, const std::string& what)
      : NumericalError(what), step_(step), norm_(norm) {}

  std::uint64_t step() const noexcept { return step_; }
  double norm() const noexcept { return norm_; }

 private:
  std::uint64_t step_;
  double norm_;
};

/// Asynchronous run aborted (staleness cap exceeded or watchdog fired).
class AsyncAbort : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace asvr
