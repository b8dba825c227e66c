// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "asvr/trace.hpp"

namespace asvr {

struct SpeedupRow {
  std::size_t threads = 1;
  /// Median time-to-target over seeds; NaN when unreached.
  double median_seconds = kUnset;
  /// time(1) / time(P); NaN when unreached.
  double speedup = kUnset;
  bool reached = false;
};

struct SpeedupTable {
  std::vector<SpeedupRow> rows;
  std::map<std::string, std::string> metadata;
};

/// Column order of trace CSV files.
inline constexpr const char* kTraceHeader =
    "epoch,wall_seconds,objective,objective_last,suboptimality,lyapunov_g,"
    "max_staleness";
/// Column order of speedup CSV files.
inline constexpr const char* kSpeedupHeader =
    "threads,median_seconds,speedup,reached";

// CSV: header row, then one line per row. Reals use 17 significant digits;
// NaN is written as an empty cell.
void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out);
void write_trace_csv(const ConvergenceTrace& trace, const std::filesystem::path& path);
ConvergenceTrace read_trace_csv(std::istream& in);
ConvergenceTrace read_trace_csv(const std::filesystem::path& path);

void write_speedup_csv(const SpeedupTable& table, std::ostream& out);
void write_speedup_csv(const SpeedupTable& table, const std::filesystem::path& path);
SpeedupTable read_speedup_csv(std::istream& in);
SpeedupTable read_speedup_csv(const std::filesystem::path& path);

// JSON mirrors the CSV rows (NaN as null) plus metadata.
nlohmann::json to_json(const ConvergenceTrace& trace);
nlohmann::json to_json(const SpeedupTable& table);
ConvergenceTrace trace_from_json(const nlohmann::json& j);
SpeedupTable speedup_from_json(const nlohmann::json& j);

/// Pretty-printed JSON; IoError names the path on failure.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Real formatted with 17 significant digits, or "" for NaN.
std::string format_real(double v);
/// Inverse of format_real; throws DatasetError on malformed text.
double parse_real(std::string_view text);

}  // namespace asvr
