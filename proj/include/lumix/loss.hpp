#ifndef LUMIX_LOSS_HPP
#define LUMIX_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "lumix/error.hpp"
#include "lumix/labels.hpp"
#include "lumix/tensor.hpp"

namespace lumix {

struct LossOutput {
  double value = 0.0;
  Tensor logits_grad;
};

inline void softmax_row(std::span<const double> logits, std::span<double> out) {
  double hi = logits[0];
  for (double z : logits) hi = std::max(hi, z);
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - hi);
    sum += out[k];
  }
  for (auto& p : out) p /= sum;
}

/// log(sum(exp(z))), evaluated as max + log1p(sum of the other terms).
inline double log_sum_exp(std::span<const double> logits) {
  std::size_t arg = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[arg]) arg = k;
  }
  const double hi = logits[arg];
  double rest = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (k != arg) rest += std::exp(logits[k] - hi);
  }
  return hi + std::log1p(rest);
}

inline Tensor softmax(const Tensor& logits) {
  detail::require(logits.rank() == 2, ErrorKind::shape_mismatch, "softmax: expected [B, C] logits");
  detail::require(logits.dim(1) >= 2, ErrorKind::invalid_argument, "softmax: need at least two classes");
  require_finite(logits, "softmax input");
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.dim(0); ++i) softmax_row(logits.slice(i), out.slice(i));
  return out;
}

inline void check_loss_shapes(const Tensor& logits, const LabelBatch& targets, const char* what) {
  if (logits.rank() != 2 || logits.dim(0) != targets.batch() || logits.dim(1) != targets.classes()) {
    detail::fail(ErrorKind::shape_mismatch, std::string(what) + ": logits " + shape_string(logits.shape()) +
                                                " vs targets " + shape_string(targets.tensor().shape()));
  }
  require_finite(logits, what);
}

/// Mean over the batch of -sum_k y_k log softmax(z)_k. Gradient uses the
/// fused form (softmax(z) - y) / B.
inline LossOutput soft_ce_loss(const Tensor& logits, const LabelBatch& targets) {
  check_loss_shapes(logits, targets, "soft_ce_loss");
  require_simplex(targets, 1e-9, "soft_ce_loss targets");
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  LossOutput out{0.0, Tensor(logits.shape())};
  const double inv_b = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto z = logits.slice(i);
    const auto y = targets.row(i);
    const double lse = log_sum_exp(z);
    double row_loss = 0.0;
    auto g = out.logits_grad.slice(i);
    for (std::size_t k = 0; k < classes; ++k) {
      row_loss -= y[k] * (z[k] - lse);
      g[k] = (std::exp(z[k] - lse) - y[k]) * inv_b;
    }
    total += row_loss;
  }
  out.value = total * inv_b;
  return out;
}

/// Per-class sigmoid cross entropy averaged over batch and classes.
inline LossOutput bce_loss(const Tensor& logits, const LabelBatch& targets) {
  check_loss_shapes(logits, targets, "bce_loss");
  for (double y : targets.tensor().values()) {
    if (!(y >= 0.0 && y <= 1.0)) detail::fail(ErrorKind::invalid_argument, "bce_loss: targets must lie in [0, 1]");
  }
  const std::size_t n = logits.size();
  LossOutput out{0.0, Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& y = targets.tensor();
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double z = logits[j];
    total += std::max(z, 0.0) - z * y[j] + std::log1p(std::exp(-std::abs(z)));
    const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out.logits_grad[j] = (sig - y[j]) * inv_n;
  }
  out.value = total * inv_n;
  return out;
}

}  // namespace lumix

#endif  // LUMIX_LOSS_HPP
