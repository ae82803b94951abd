#ifndef LUMIX_LUMIX_HPP
#define LUMIX_LUMIX_HPP

// Label-uncertainty mixing. For each mixed pair (A, B) the label weight of A
// is
//
//   lambda = (1 - r1 - r2) * lambda0 + r1 * lambda_r + r2 * lambda_s
//
// where lambda0 is the geometric ratio from the input mix, lambda_r a
// random draw and lambda_s = p_A / (p_A + p_B) from the (detached) softmax
// of the current logits. The mixed target is lambda * y_A + (1 - lambda) * y_B
// and the objective adds eta * R with R = sum_k y_k max(0, b_k - p_k), where
// b marks the positive classes of the pair.
//
// Convention: lambda always weights sample A (the sample whose own index the
// row has). The reference listing mixes with lam on y2 and computes lam_s
// from prob2; this is the same rule with the roles of the two samples
// swapped.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lumix/error.hpp"
#include "lumix/labels.hpp"
#include "lumix/loss.hpp"
#include "lumix/mixing.hpp"
#include "lumix/rng.hpp"
#include "lumix/tensor.hpp"

namespace lumix {

enum class LambdaRDist { none, beta, gaussian };
enum class LossKind { softmax_ce, bce };
/// How the binary positive vector b is formed from the two label rows.
enum class PositiveSet { either, both };

struct LumixConfig {
  double alpha0 = 0.8;
  Lambda0Dist lambda0_dist = Lambda0Dist::beta;
  LambdaRDist lambda_r_dist = LambdaRDist::beta;
  double alpha_r = 2.0;
  double gauss_mu = 0.0;
  double gauss_sigma = 1.0;
  double r1 = 0.4;
  double r2 = 0.1;
  double eta = 1.0;
  double smoothing_eps = 0.1;
  LossKind loss_kind = LossKind::softmax_ce;
  bool enable_lambda_s = true;
  bool enable_reg = true;
  PositiveSet positive_set = PositiveSet::either;

  /// Weight actually given to lambda_r (zero when no distribution is set).
  double effective_r1() const noexcept { return lambda_r_dist == LambdaRDist::none ? 0.0 : r1; }
  double effective_r2() const noexcept { return enable_lambda_s ? r2 : 0.0; }

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    auto bad = [](const std::string& what) { detail::fail(ErrorKind::config, what); };
    if (!finite(r1) || !finite(r2) || r1 < 0.0 || r2 < 0.0) bad("lumix.r1 and lumix.r2 must be finite and >= 0");
    if (r1 + r2 > 1.0 + 1e-12) bad("lumix.r1 + lumix.r2 must not exceed 1");
    if (!finite(eta) || eta < 0.0) bad("lumix.eta must be finite and >= 0");
    if (!finite(smoothing_eps) || smoothing_eps < 0.0 || smoothing_eps >= 1.0) bad("lumix.smoothing must lie in [0, 1)");
    if (!finite(alpha0) || alpha0 <= 0.0) bad("lumix.alpha0 must be > 0");
    if (!finite(alpha_r) || alpha_r <= 0.0) bad("lumix.alpha_r must be > 0");
    if (!finite(gauss_mu) || !finite(gauss_sigma) || gauss_sigma < 0.0) bad("lumix.gauss_sigma must be >= 0");
  }
};

struct LambdaBreakdown {
  double lambda0 = 0.0;
  double lambda_r = 0.0;  // NaN when no lambda_r distribution is configured
  double lambda_s = 0.0;
  double lambda_final = 0.0;
};

/// p_A / (p_A + p_B). Self-pairs (same class) give 0.5, as does a pair whose
/// probabilities both underflow.
inline double compute_lambda_s(std::span<const double> probs, std::size_t idx_a, std::size_t idx_b) {
  detail::require(idx_a < probs.size() && idx_b < probs.size(), ErrorKind::invalid_argument,
                  "compute_lambda_s: class index out of range");
  if (idx_a == idx_b) return 0.5;
  const double pa = probs[idx_a];
  const double pb = probs[idx_b];
  if (pa < 1e-300 && pb < 1e-300) return 0.5;
  return pa / (pa + pb);
}

/// (1 - r1 - r2) * lambda0 + r1 * lambda_r + r2 * lambda_s, clamped to [0, 1].
inline double combine_lambda(double lambda0, double lambda_r, double lambda_s, double r1, double r2) {
  if (!(r1 >= 0.0 && r2 >= 0.0 && r1 + r2 <= 1.0 + 1e-12)) {
    detail::fail(ErrorKind::config, "combine_lambda: need r1, r2 >= 0 and r1 + r2 <= 1");
  }
  const double lam = (1.0 - r1 - r2) * lambda0 + r1 * lambda_r + r2 * lambda_s;
  return std::clamp(lam, 0.0, 1.0);
}

inline std::vector<double> mix_labels(std::span<const double> ya, std::span<const double> yb, double lambda) {
  detail::require(ya.size() == yb.size(), ErrorKind::shape_mismatch, "mix_labels: rows differ in length");
  std::vector<double> out(ya.size());
  const double rest = 1.0 - lambda;
  for (std::size_t k = 0; k < ya.size(); ++k) out[k] = lambda * ya[k] + rest * yb[k];
  return out;
}

/// b_k = 1 for the labelled classes of A and B (entries strictly above the
/// row minimum). `both` keeps only classes positive in both rows.
inline std::vector<double> positive_mask(std::span<const double> ya, std::span<const double> yb,
                                         PositiveSet set = PositiveSet::either) {
  detail::require(ya.size() == yb.size(), ErrorKind::shape_mismatch, "positive_mask: rows differ in length");
  const auto pa = classes_above_min(ya);
  const auto pb = classes_above_min(yb);
  if (pa.empty() || pb.empty()) {
    detail::fail(ErrorKind::invalid_argument, "positive_mask: uniform label row has no detectable positive class");
  }
  std::vector<double> in_a(ya.size(), 0.0), in_b(ya.size(), 0.0);
  for (auto k : pa) in_a[k] = 1.0;
  for (auto k : pb) in_b[k] = 1.0;
  std::vector<double> b(ya.size(), 0.0);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const bool on = set == PositiveSet::either ? (in_a[k] > 0.0 || in_b[k] > 0.0) : (in_a[k] > 0.0 && in_b[k] > 0.0);
    b[k] = on ? 1.0 : 0.0;
  }
  return b;
}

/// R = sum_k y_k max(0, b_k - p_k).
inline double regularizer(std::span<const double> probs, std::span<const double> y, std::span<const double> b) {
  detail::require(probs.size() == y.size() && y.size() == b.size(), ErrorKind::shape_mismatch,
                  "regularizer: mismatched lengths");
  double r = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) r += y[k] * std::max(0.0, b[k] - probs[k]);
  return r;
}

/// dR/dz for logits z with p = softmax(z): dR/dp_k = -y_k where the hinge is
/// active, pushed through the softmax Jacobian.
inline std::vector<double> regularizer_logits_grad(std::span<const double> probs, std::span<const double> y,
                                                   std::span<const double> b) {
  const std::size_t n = probs.size();
  std::vector<double> dp(n, 0.0);
  double dot = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (b[k] - probs[k] > 0.0) dp[k] = -y[k];
    dot += dp[k] * probs[k];
  }
  std::vector<double> dz(n);
  for (std::size_t j = 0; j < n; ++j) dz[j] = probs[j] * (dp[j] - dot);
  return dz;
}

/// Per-sample targets built from detached predictions.
struct LumixTargets {
  LabelBatch mixed;
  Tensor positives;  // [B, C] binary
  std::vector<LambdaBreakdown> lambdas;
};

struct LumixResult {
  LossOutput loss;        // L0 + eta * R, with its logits gradient
  double base_loss = 0.0; // L0
  double reg = 0.0;       // batch mean of R (0 when disabled)
  LumixTargets targets;
};

namespace detail {

inline double draw_lambda_r(const LumixConfig& cfg, Rng& rng) {
  switch (cfg.lambda_r_dist) {
    case LambdaRDist::beta: return sample_beta(cfg.alpha_r, cfg.alpha_r, rng);
    case LambdaRDist::gaussian: return std::clamp(sample_gaussian(cfg.gauss_mu, cfg.gauss_sigma, rng), 0.0, 1.0);
    case LambdaRDist::none: break;
  }
  return std::nan("");
}

}  // namespace detail

/// Builds mixed targets, positive masks and lambda diagnostics. labels_b row
/// i is the label of the sample mixed into row i. Consumes one lambda_r draw
/// per sample, in row order, when a lambda_r distribution is configured.
inline LumixTargets build_lumix_targets(const Tensor& logits, const LabelBatch& labels_a, const LabelBatch& labels_b,
                                        std::span<const double> lambda0, const LumixConfig& cfg, Rng& lambda_r_rng) {
  cfg.validate();
  check_loss_shapes(logits, labels_a, "lumix targets");
  check_loss_shapes(logits, labels_b, "lumix targets");
  detail::require(lambda0.size() == labels_a.batch(), ErrorKind::shape_mismatch,
                  "lumix targets: one lambda0 per sample required");
  require_simplex(labels_a, 1e-9, "lumix labels_a");
  require_simplex(labels_b, 1e-9, "lumix labels_b");
  const Tensor probs = softmax(logits);
  const std::size_t batch = labels_a.batch();
  const std::size_t classes = labels_a.classes();
  const double r1 = cfg.effective_r1();
  const double r2 = cfg.effective_r2();

  LumixTargets t{LabelBatch(batch, classes), Tensor({batch, classes}), std::vector<LambdaBreakdown>(batch)};
  for (std::size_t i = 0; i < batch; ++i) {
    const auto ya = labels_a.row(i);
    const auto yb = labels_b.row(i);
    auto& lb = t.lambdas[i];
    lb.lambda0 = lambda0[i];
    lb.lambda_r = detail::draw_lambda_r(cfg, lambda_r_rng);
    lb.lambda_s = compute_lambda_s(probs.slice(i), labelled_class(ya), labelled_class(yb));
    const double lam_r = cfg.lambda_r_dist == LambdaRDist::none ? 0.0 : lb.lambda_r;
    lb.lambda_final = combine_lambda(lb.lambda0, lam_r, lb.lambda_s, r1, r2);
    const auto mixed = mix_labels(ya, yb, lb.lambda_final);
    std::copy(mixed.begin(), mixed.end(), t.mixed.row(i).begin());
    const auto b = positive_mask(ya, yb, cfg.positive_set);
    std::copy(b.begin(), b.end(), t.positives.slice(i).begin());
  }
  return t;
}

/// Objective for frozen targets. The targets are constants here, so the
/// gradient carries no dependence of lambda_s on the logits.
inline LumixResult loss_from_targets(const Tensor& logits, LumixTargets targets, const LumixConfig& cfg) {
  LumixResult out;
  out.loss = cfg.loss_kind == LossKind::softmax_ce ? soft_ce_loss(logits, targets.mixed)
                                                   : bce_loss(logits, targets.mixed);
  out.base_loss = out.loss.value;
  if (cfg.enable_reg) {
    const Tensor probs = softmax(logits);
    const std::size_t batch = logits.dim(0);
    const double inv_b = 1.0 / static_cast<double>(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto p = probs.slice(i);
      const auto y = targets.mixed.row(i);
      const auto b = targets.positives.slice(i);
      total += regularizer(p, y, b);
      const auto dz = regularizer_logits_grad(p, y, b);
      auto g = out.loss.logits_grad.slice(i);
      for (std::size_t k = 0; k < dz.size(); ++k) g[k] += cfg.eta * (dz[k] * inv_b);
    }
    out.reg = total * inv_b;
    out.loss.value = out.base_loss + cfg.eta * out.reg;
  }
  out.targets = std::move(targets);
  return out;
}

/// Full objective on the logits of a mixed batch.
inline LumixResult lumix_loss(const Tensor& logits, const LabelBatch& labels_a, const LabelBatch& labels_b,
                              const MixPlan& plan, const LumixConfig& cfg, Rng& lambda_r_rng) {
  auto targets = build_lumix_targets(logits, labels_a, labels_b, plan.lambda0, cfg, lambda_r_rng);
  return loss_from_targets(logits, std::move(targets), cfg);
}

/// Plain mixed soft-label targets: weight lambda0 on A, no perturbation.
inline LabelBatch mixed_targets(const LabelBatch& labels_a, const LabelBatch& labels_b,
                                std::span<const double> lambda0) {
  LabelBatch out(labels_a.batch(), labels_a.classes());
  for (std::size_t i = 0; i < labels_a.batch(); ++i) {
    const auto row = mix_labels(labels_a.row(i), labels_b.row(i), lambda0[i]);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

/// Rows of `labels` reordered so row i holds labels[pairing[i]].
inline LabelBatch gather_rows(const LabelBatch& labels, std::span<const std::size_t> pairing) {
  LabelBatch out(pairing.size(), labels.classes());
  for (std::size_t i = 0; i < pairing.size(); ++i) {
    const auto src = labels.row(pairing[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace lumix

#endif  // LUMIX_LUMIX_HPP
