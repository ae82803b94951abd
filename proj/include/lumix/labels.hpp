#ifndef LUMIX_LABELS_HPP
#define LUMIX_LABELS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lumix/error.hpp"
#include "lumix/tensor.hpp"

namespace lumix {

/// B rows of per-class confidence, stored as a [B, C] tensor.
class LabelBatch {
 public:
  LabelBatch() = default;
  explicit LabelBatch(Tensor rows) : rows_(std::move(rows)) {
    detail::require(rows_.rank() == 2, ErrorKind::shape_mismatch, "LabelBatch: expected a [B, C] tensor");
  }
  LabelBatch(std::size_t batch, std::size_t classes) : rows_({batch, classes}) {}

  std::size_t batch() const { return rows_.dim(0); }
  std::size_t classes() const { return rows_.dim(1); }

  std::span<double> row(std::size_t i) { return rows_.slice(i); }
  std::span<const double> row(std::size_t i) const { return rows_.slice(i); }

  const Tensor& tensor() const noexcept { return rows_; }
  Tensor& tensor() noexcept { return rows_; }

  friend bool operator==(const LabelBatch&, const LabelBatch&) = default;

 private:
  Tensor rows_;
};

/// Rows are non-negative and sum to one within `tolerance`.
inline bool on_simplex(std::span<const double> row, double tolerance) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= -tolerance)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tolerance;
}

inline void require_simplex(const LabelBatch& labels, double tolerance, const char* what) {
  for (std::size_t i = 0; i < labels.batch(); ++i) {
    if (!on_simplex(labels.row(i), tolerance)) {
      detail::fail(ErrorKind::invalid_argument,
                   std::string(what) + ": row " + std::to_string(i) + " is not on the probability simplex");
    }
  }
}

/// Smoothed one-hot targets: 1 - eps + eps/C at the true class, eps/C elsewhere.
inline LabelBatch build_labels(std::span<const int> class_idx, std::size_t classes, double smoothing_eps) {
  detail::require(classes >= 1, ErrorKind::invalid_argument, "build_labels: need at least one class");
  detail::require(smoothing_eps >= 0.0 && smoothing_eps < 1.0, ErrorKind::invalid_argument,
                  "build_labels: smoothing must lie in [0, 1)");
  LabelBatch labels(class_idx.size(), classes);
  const double off = smoothing_eps / static_cast<double>(classes);
  const double on = 1.0 - smoothing_eps + off;
  for (std::size_t i = 0; i < class_idx.size(); ++i) {
    const int k = class_idx[i];
    if (k < 0 || static_cast<std::size_t>(k) >= classes) {
      detail::fail(ErrorKind::invalid_argument, "build_labels: class index " + std::to_string(k) +
                                                    " outside [0, " + std::to_string(classes) + ")");
    }
    auto row = labels.row(i);
    for (auto& v : row) v = off;
    row[static_cast<std::size_t>(k)] = on;
  }
  return labels;
}

/// Classes whose confidence is strictly above the row minimum.
inline std::vector<std::size_t> classes_above_min(std::span<const double> row) {
  std::vector<std::size_t> out;
  if (row.empty()) return out;
  double lo = row[0];
  for (double v : row) lo = std::min(lo, v);
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] > lo) out.push_back(k);
  }
  return out;
}

/// Labelled class of a row produced by build_labels.
inline std::size_t labelled_class(std::span<const double> row) {
  const auto above = classes_above_min(row);
  if (above.empty()) {
    detail::fail(ErrorKind::invalid_argument, "label row is uniform: no positive class can be detected");
  }
  std::size_t best = above[0];
  for (std::size_t k : above) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

}  // namespace lumix

#endif  // LUMIX_LABELS_HPP
