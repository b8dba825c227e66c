// SPDX-License-Identifier: Apache-2.0
#include "asvr/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>

#include "asvr/error.hpp"

namespace asvr {

SparseDataset::SparseDataset(std::vector<std::size_t> row_ptr,
                             std::vector<FeatureId> cols,
                             std::vector<double> values,
                             std::vector<double> labels, std::size_t dim)
    : row_ptr_(std::move(row_ptr)),
      cols_(std::move(cols)),
      values_(std::move(values)),
      labels_(std::move(labels)),
      dim_(dim) {
  const std::size_t n = labels_.size();
  if (n == 0) throw DatasetError("empty dataset");
  if (row_ptr_.size() != n + 1 || row_ptr_.front() != 0 ||
      row_ptr_.back() != cols_.size() || cols_.size() != values_.size()) {
    throw DatasetError("inconsistent CSR layout");
  }
  col_counts_.assign(dim_, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels_[i] != 1.0 && labels_[i] != -1.0) {
      throw DatasetError(fmt::format("example {}: label {} not in {{-1,+1}}",
                                     i, labels_[i]));
    }
    if (row_ptr_[i + 1] < row_ptr_[i]) {
      throw DatasetError("inconsistent CSR layout");
    }
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (cols_[k] >= dim_) {
        throw DatasetError(fmt::format(
            "example {}: feature {} outside dimension {}", i, cols_[k], dim_));
      }
      if (k > row_ptr_[i] && cols_[k] <= cols_[k - 1]) {
        throw DatasetError(
            fmt::format("example {}: feature ids not increasing", i));
      }
      if (values_[k] == 0.0 || !std::isfinite(values_[k])) {
        throw DatasetError(fmt::format(
            "example {}: feature {} has zero or non-finite value", i,
            cols_[k]));
      }
      ++col_counts_[cols_[k]];
    }
  }
  const std::uint64_t max_count =
      col_counts_.empty()
          ? 0
          : *std::max_element(col_counts_.begin(), col_counts_.end());
  delta_ = static_cast<double>(max_count) / static_cast<double>(n);
}

std::vector<FeatureId> SparseDataset::unused_features() const {
  std::vector<FeatureId> out;
  for (std::size_t j = 0; j < dim_; ++j) {
    if (col_counts_[j] == 0) out.push_back(static_cast<FeatureId>(j));
  }
  return out;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string_view next_token(std::string_view& s) {
  std::size_t b = 0;
  while (b < s.size() && is_space(s[b])) ++b;
  std::size_t e = b;
  while (e < s.size() && !is_space(s[e])) ++e;
  std::string_view tok = s.substr(b, e - b);
  s.remove_prefix(e);
  return tok;
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto [ptr, ec] =
      std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

bool parse_index(std::string_view tok, std::uint64_t& out) {
  const auto [ptr, ec] =
      std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

// Maps the observed label set onto {-1,+1}.
std::vector<double> map_labels(const std::vector<double>& raw) {
  const std::set<double> seen(raw.begin(), raw.end());
  auto subset_of = [&](double a, double b) {
    return std::all_of(seen.begin(), seen.end(),
                       [&](double v) { return v == a || v == b; });
  };
  double neg = 0.0;
  if (subset_of(-1.0, 1.0)) {
    return raw;
  } else if (subset_of(0.0, 1.0)) {
    neg = 0.0;
  } else if (subset_of(1.0, 2.0)) {
    neg = 1.0;
  } else {
    std::string labels;
    for (double v : seen) labels += fmt::format(" {}", v);
    throw DatasetError("unsupported label set:" + labels);
  }
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(),
                 [neg](double v) { return v == neg ? -1.0 : 1.0; });
  return out;
}

}  // namespace

SparseDataset load_libsvm(std::istream& in, std::optional<std::size_t> dim) {
  std::vector<std::size_t> row_ptr{0};
  std::vector<FeatureId> cols;
  std::vector<double> values;
  std::vector<double> labels;
  std::size_t max_id = 0;
  bool any_feature = false;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest(line);
    std::string_view tok = next_token(rest);
    if (tok.empty() || tok.front() == '#') continue;

    auto fail = [&](const std::string& why) {
      return DatasetError(fmt::format("line {}: {}", line_no, why));
    };

    double label = 0.0;
    if (!parse_double(tok, label)) {
      throw fail(fmt::format("bad label '{}'", tok));
    }
    std::uint64_t prev = 0;
    for (tok = next_token(rest); !tok.empty(); tok = next_token(rest)) {
      if (tok.front() == '#') break;
      const std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw fail(fmt::format("expected idx:value, got '{}'", tok));
      }
      std::uint64_t idx = 0;
      double val = 0.0;
      if (!parse_index(tok.substr(0, colon), idx) || idx == 0) {
        throw fail(fmt::format("bad 1-based feature index in '{}'", tok));
      }
      if (!parse_double(tok.substr(colon + 1), val) || !std::isfinite(val)) {
        throw fail(fmt::format("bad feature value in '{}'", tok));
      }
      if (idx <= prev) throw fail("feature indices not strictly increasing");
      if (val == 0.0) throw fail(fmt::format("explicit zero at index {}", idx));
      if (idx - 1 > std::numeric_limits<FeatureId>::max()) {
        throw fail("feature index too large");
      }
      prev = idx;
      cols.push_back(static_cast<FeatureId>(idx - 1));
      values.push_back(val);
      max_id = std::max<std::size_t>(max_id, idx - 1);
      any_feature = true;
    }
    labels.push_back(label);
    row_ptr.push_back(cols.size());
  }
  if (in.bad()) throw IoError("read failure while parsing LIBSVM input");
  if (labels.empty()) throw DatasetError("empty dataset");

  std::size_t d = any_feature ? max_id + 1 : 0;
  if (dim) {
    if (*dim < d) {
      throw DatasetError(fmt::format(
          "dimension override {} smaller than max feature id + 1 = {}", *dim,
          d));
    }
    d = *dim;
  }
  return SparseDataset(std::move(row_ptr), std::move(cols), std::move(values),
                       map_labels(labels), d);
}

SparseDataset load_libsvm(const std::filesystem::path& path,
                          std::optional<std::size_t> dim) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return load_libsvm(in, dim);
}

void write_libsvm(std::ostream& out, const SparseDataset& ds) {
  std::string buf;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ExampleView ex = ds.example(i);
    buf.clear();
    fmt::format_to(std::back_inserter(buf), "{:+}", static_cast<int>(ex.label));
    for (std::size_t k = 0; k < ex.size(); ++k) {
      fmt::format_to(std::back_inserter(buf), " {}:{:.17g}",
                     ex.indices[k] + 1, ex.values[k]);
    }
    buf.push_back('\n');
    out << buf;
  }
}

void write_libsvm(const std::filesystem::path& path, const SparseDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  write_libsvm(out, ds);
  out.flush();
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

SparseDataset normalize_rows(const SparseDataset& ds) {
  std::vector<double> values(ds.values().begin(), ds.values().end());
  const auto row_ptr = ds.row_ptr();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double sq = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      sq += values[k] * values[k];
    }
    if (sq == 0.0) {
      throw DatasetError(fmt::format("example {} has zero norm", i));
    }
    const double norm = std::sqrt(sq);
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      values[k] /= norm;
    }
  }
  return SparseDataset(
      std::vector<std::size_t>(row_ptr.begin(), row_ptr.end()),
      std::vector<FeatureId>(ds.cols().begin(), ds.cols().end()),
      std::move(values),
      std::vector<double>(ds.labels().begin(), ds.labels().end()), ds.dim());
}

double compute_delta(const SparseDataset& ds) {
  const auto counts = ds.col_counts();
  const std::uint64_t max_count =
      counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  return static_cast<double>(max_count) / static_cast<double>(ds.size());
}

namespace {

// Deals feature ids from a shuffled deck; a row never receives the same id
// twice, even when the deck is reshuffled mid-row.
class SupportDealer {
 public:
  SupportDealer(std::size_t dim, std::mt19937_64& rng)
      : deck_(dim), rng_(rng) {
    std::iota(deck_.begin(), deck_.end(), FeatureId{0});
    std::shuffle(deck_.begin(), deck_.end(), rng_);
  }

  void deal(std::size_t count, std::vector<FeatureId>& row) {
    row.clear();
    while (row.size() < count) {
      if (pos_ == deck_.size()) reshuffle(row, count - row.size());
      row.push_back(deck_[pos_++]);
    }
    std::sort(row.begin(), row.end());
  }

 private:
  // Reshuffles and moves ids already in `row` out of the first `need` slots.
  void reshuffle(const std::vector<FeatureId>& row, std::size_t need) {
    std::shuffle(deck_.begin(), deck_.end(), rng_);
    pos_ = 0;
    auto taken = [&](FeatureId f) {
      return std::find(row.begin(), row.end(), f) != row.end();
    };
    std::size_t swap_from = need;
    for (std::size_t k = 0; k < need; ++k) {
      if (!taken(deck_[k])) continue;
      while (taken(deck_[swap_from])) ++swap_from;
      std::swap(deck_[k], deck_[swap_from++]);
    }
  }

  std::vector<FeatureId> deck_;
  std::mt19937_64& rng_;
  std::size_t pos_ = 0;
};

}  // namespace

SparseDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.dim == 0 || spec.nnz_per_row == 0 ||
      spec.nnz_per_row > spec.dim) {
    throw ConfigError(fmt::format(
        "invalid synthetic sizes n={} d={} nnz={} (need 1 <= nnz <= d)",
        spec.n, spec.dim, spec.nnz_per_row));
  }
  if (spec.flip_probability < 0.0 || spec.flip_probability > 1.0) {
    throw ConfigError("flip probability must lie in [0,1]");
  }
  if (spec.dim > std::numeric_limits<FeatureId>::max()) {
    throw ConfigError("dimension too large");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution flip(spec.flip_probability);

  std::vector<double> planted(spec.dim);
  for (double& w : planted) w = gauss(rng);

  SupportDealer dealer(spec.dim, rng);
  std::vector<std::size_t> row_ptr{0};
  std::vector<FeatureId> cols;
  std::vector<double> values;
  std::vector<double> labels;
  cols.reserve(spec.n * spec.nnz_per_row);
  values.reserve(spec.n * spec.nnz_per_row);

  std::vector<FeatureId> row;
  for (std::size_t i = 0; i < spec.n; ++i) {
    dealer.deal(spec.nnz_per_row, row);
    double sq = 0.0;
    const std::size_t start = values.size();
    for (FeatureId j : row) {
      double v = 0.0;
      while (v == 0.0) v = gauss(rng);
      cols.push_back(j);
      values.push_back(v);
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    double score = 0.0;
    for (std::size_t k = start; k < values.size(); ++k) {
      values[k] /= norm;
      score += values[k] * planted[cols[k]];
    }
    double y = score > 0.0 ? -1.0 : 1.0;
    if (flip(rng)) y = -y;
    labels.push_back(y);
    row_ptr.push_back(cols.size());
  }
  return SparseDataset(std::move(row_ptr), std::move(cols), std::move(values),
                       std::move(labels), spec.dim);
}

}  // namespace asvr
