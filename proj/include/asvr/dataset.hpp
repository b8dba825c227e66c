// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace asvr {

using FeatureId = std::uint32_t;

/// Read-only view of one example: support e_i, values z_i on it, label y_i.
struct ExampleView {
  std::span<const FeatureId> indices;
  std::span<const double> values;
  double label;

  std::size_t size() const noexcept { return indices.size(); }
};

/// Row-sparse binary classification data stored in CSR form.
///
/// Immutable after construction. The constructor validates the layout
/// (strictly increasing ids per row, no explicit zeros, labels in {-1,+1},
/// ids below dim) and computes the column occupancy counts d_j and the
/// sparsity constant delta = max_j d_j / n.
class SparseDataset {
 public:
  SparseDataset(std::vector<std::size_t> row_ptr, std::vector<FeatureId> cols,
                std::vector<double> values, std::vector<double> labels,
                std::size_t dim);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return cols_.size(); }

  ExampleView example(std::size_t i) const noexcept {
    const std::size_t b = row_ptr_[i];
    const std::size_t e = row_ptr_[i + 1];
    return {std::span(cols_).subspan(b, e - b),
            std::span(values_).subspan(b, e - b), labels_[i]};
  }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const FeatureId> cols() const noexcept { return cols_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> labels() const noexcept { return labels_; }

  /// d_j: number of examples whose support contains feature j.
  std::span<const std::uint64_t> col_counts() const noexcept {
    return col_counts_;
  }
  double delta() const noexcept { return delta_; }

  /// Features that never occur (d_j = 0). They stay in the index space.
  std::vector<FeatureId> unused_features() const;

 private:
  std::vector<std::size_t> row_ptr_;
  std::vector<FeatureId> cols_;
  std::vector<double> values_;
  std::vector<double> labels_;
  std::size_t dim_;
  std::vector<std::uint64_t> col_counts_;
  double delta_ = 0.0;
};

/// Parses LIBSVM text: `<label> <idx>:<val> ...` with 1-based ids.
/// Lines starting with '#' and blank lines are skipped. Labels from
/// {-1,+1}, {0,1} or {1,2} are mapped to {-1,+1}; anything else throws.
/// `dim` overrides the inferred dimension (max id + 1) when larger.
SparseDataset load_libsvm(std::istream& in,
                          std::optional<std::size_t> dim = std::nullopt);
SparseDataset load_libsvm(const std::filesystem::path& path,
                          std::optional<std::size_t> dim = std::nullopt);

/// Writes LIBSVM text with 17 significant digits.
void write_libsvm(std::ostream& out, const SparseDataset& ds);
void write_libsvm(const std::filesystem::path& path, const SparseDataset& ds);

/// Scales every row to unit Euclidean norm. Throws on a zero-norm row.
SparseDataset normalize_rows(const SparseDataset& ds);

/// Smallest constant with E_i ||x||_{e_i}^2 <= delta ||x||^2, i.e.
/// max_j d_j / n.
double compute_delta(const SparseDataset& ds);

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t dim = 100;
  std::size_t nnz_per_row = 10;
  /// Probability that a planted label is flipped.
  double flip_probability = 0.1;
  std::uint64_t seed = 1;
};

/// Reproducible sparse classification data.
///
/// Supports are dealt from a reshuffled deck of feature ids, so column
/// counts are balanced (every d_j is floor or ceil of n*nnz/dim) and delta
/// is close to nnz/dim. Values are Gaussian, rows unit-normalized. Labels
/// come from a planted model w: y_i = -sign(z_i . w), matching the loss
/// log(1 + exp(y z.x)), then flipped with `flip_probability`.
SparseDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace asvr
