// SPDX-License-Identifier: Apache-2.0
#include "asvr/trace_io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "asvr/error.hpp"

namespace asvr {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::uint64_t parse_count(std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DatasetError(fmt::format("malformed integer '{}'", text));
  }
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

void expect_header(std::istream& in, const char* header) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != header) {
    throw DatasetError(fmt::format("expected CSV header '{}'", header));
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  return in;
}

nlohmann::json real_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double json_real(const nlohmann::json& j) {
  return j.is_null() ? kUnset : j.get<double>();
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return {};
  return fmt::format("{:.17g}", v);
}

double parse_real(std::string_view text) {
  if (text.empty()) return kUnset;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DatasetError(fmt::format("malformed number '{}'", text));
  }
  return v;
}

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const TraceRow& r : trace.rows) {
    out << r.epoch << ',' << format_real(r.wall_seconds) << ','
        << format_real(r.objective) << ',' << format_real(r.objective_last) << ','
        << format_real(r.suboptimality) << ',' << format_real(r.lyapunov_g) << ','
        << r.max_staleness << '\n';
  }
}

void write_trace_csv(const ConvergenceTrace& trace, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  write_trace_csv(trace, out);
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

ConvergenceTrace read_trace_csv(std::istream& in) {
  expect_header(in, kTraceHeader);
  ConvergenceTrace trace;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 7) {
      throw DatasetError(fmt::format("trace line {}: expected 7 cells, got {}",
                                     line_no, cells.size()));
    }
    TraceRow r;
    r.epoch = parse_count(cells[0]);
    r.wall_seconds = parse_real(cells[1]);
    r.objective = parse_real(cells[2]);
    r.objective_last = parse_real(cells[3]);
    r.suboptimality = parse_real(cells[4]);
    r.lyapunov_g = parse_real(cells[5]);
    r.max_staleness = parse_count(cells[6]);
    trace.rows.push_back(r);
  }
  return trace;
}

ConvergenceTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_trace_csv(in);
}

void write_speedup_csv(const SpeedupTable& table, std::ostream& out) {
  out << kSpeedupHeader << '\n';
  for (const SpeedupRow& r : table.rows) {
    out << r.threads << ',' << format_real(r.median_seconds) << ','
        << format_real(r.speedup) << ',' << (r.reached ? 1 : 0) << '\n';
  }
}

void write_speedup_csv(const SpeedupTable& table, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  write_speedup_csv(table, out);
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

SpeedupTable read_speedup_csv(std::istream& in) {
  expect_header(in, kSpeedupHeader);
  SpeedupTable table;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) {
      throw DatasetError(fmt::format("speedup line {}: expected 4 cells, got {}",
                                     line_no, cells.size()));
    }
    SpeedupRow r;
    r.threads = parse_count(cells[0]);
    r.median_seconds = parse_real(cells[1]);
    r.speedup = parse_real(cells[2]);
    r.reached = parse_count(cells[3]) != 0;
    table.rows.push_back(r);
  }
  return table;
}

SpeedupTable read_speedup_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_speedup_csv(in);
}

nlohmann::json to_json(const ConvergenceTrace& trace) {
  nlohmann::json rows = nlohmann::json::array();
  for (const TraceRow& r : trace.rows) {
    rows.push_back({{"epoch", r.epoch},
                    {"wall_seconds", real_json(r.wall_seconds)},
                    {"objective", real_json(r.objective)},
                    {"objective_last", real_json(r.objective_last)},
                    {"suboptimality", real_json(r.suboptimality)},
                    {"lyapunov_g", real_json(r.lyapunov_g)},
                    {"max_staleness", r.max_staleness}});
  }
  return {{"rows", rows},
          {"initial_objective", real_json(trace.initial_objective)},
          {"metadata", trace.metadata}};
}

nlohmann::json to_json(const SpeedupTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SpeedupRow& r : table.rows) {
    rows.push_back({{"threads", r.threads},
                    {"median_seconds", real_json(r.median_seconds)},
                    {"speedup", real_json(r.speedup)},
                    {"reached", r.reached}});
  }
  return {{"rows", rows}, {"metadata", table.metadata}};
}

ConvergenceTrace trace_from_json(const nlohmann::json& j) {
  ConvergenceTrace trace;
  for (const auto& r : j.at("rows")) {
    TraceRow row;
    row.epoch = r.at("epoch").get<std::uint64_t>();
    row.wall_seconds = json_real(r.at("wall_seconds"));
    row.objective = json_real(r.at("objective"));
    row.objective_last = json_real(r.at("objective_last"));
    row.suboptimality = json_real(r.at("suboptimality"));
    row.lyapunov_g = json_real(r.at("lyapunov_g"));
    row.max_staleness = r.at("max_staleness").get<std::uint64_t>();
    trace.rows.push_back(row);
  }
  if (j.contains("initial_objective")) {
    trace.initial_objective = json_real(j.at("initial_objective"));
  }
  if (j.contains("metadata")) {
    trace.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  }
  return trace;
}

SpeedupTable speedup_from_json(const nlohmann::json& j) {
  SpeedupTable table;
  for (const auto& r : j.at("rows")) {
    SpeedupRow row;
    row.threads = r.at("threads").get<std::size_t>();
    row.median_seconds = json_real(r.at("median_seconds"));
    row.speedup = json_real(r.at("speedup"));
    row.reached = r.at("reached").get<bool>();
    table.rows.push_back(row);
  }
  if (j.contains("metadata")) {
    table.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  }
  return table;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("'{}': {}", path.string(), e.what()));
  }
}

}  // namespace asvr
