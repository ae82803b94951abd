#include <gtest/gtest.h>

#include "lumix/lumix.hpp"
#include "scalar_oracle.hpp"
#include "test_util.hpp"

using namespace lumix;

namespace {

std::vector<double> row(std::initializer_list<double> v) { return v; }

LabelBatch labels_of(const std::vector<int>& cls, std::size_t classes, double eps) {
  return build_labels(cls, classes, eps);
}

MixPlan plan_with(std::vector<double> lambda0) {
  MixPlan p;
  p.mode = MixMode::cutmix;
  p.lambda0 = std::move(lambda0);
  p.pairing.resize(p.lambda0.size());
  for (std::size_t i = 0; i < p.pairing.size(); ++i) p.pairing[i] = i;
  return p;
}

}  // namespace

TEST(LambdaS, Examples) {
  EXPECT_EQ(compute_lambda_s(row({0.3, 0.4, 0.3}), 0, 2), 0.5);
  EXPECT_NEAR(compute_lambda_s(row({0.6, 0.2, 0.2}), 0, 1), 0.75, 1e-15);
  const Tensor p = softmax(Tensor({1, 3}, std::vector<double>{1, 2, 3}));
  EXPECT_NEAR(compute_lambda_s(p.slice(0), 0, 2), 0.119202922022118, 1e-14);
  EXPECT_EQ(compute_lambda_s(row({0.2, 0.8}), 1, 1), 0.5);
  EXPECT_EQ(compute_lambda_s(row({1e-310, 1e-310, 1.0}), 0, 1), 0.5);
  EXPECT_THROW(compute_lambda_s(row({0.5, 0.5}), 0, 2), Error);
}

TEST(LambdaS, PrefersTheMoreLikelyClass) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Tensor p = softmax(testutil::random_tensor({1, 5}, rng, -4, 4));
    const auto s = p.slice(0);
    const double ls = compute_lambda_s(s, 1, 3);
    if (s[1] > s[3]) EXPECT_GT(ls, 0.5);
    if (s[1] < s[3]) EXPECT_LT(ls, 0.5);
  }
}

TEST(CombineLambda, Examples) {
  EXPECT_EQ(combine_lambda(0.37, 0.9, 0.1, 0.0, 0.0), 0.37);
  for (double r1 : {0.0, 0.4, 0.7})
    for (double r2 : {0.0, 0.1, 0.3}) EXPECT_NEAR(combine_lambda(0.5, 0.5, 0.5, r1, r2), 0.5, 1e-15);
  EXPECT_EQ(combine_lambda(0.2, 0.83, 0.4, 1.0, 0.0), 0.83);
  EXPECT_NEAR(combine_lambda(0.2, 0.8, 0.6, 0.4, 0.1), 0.5 * 0.2 + 0.4 * 0.8 + 0.1 * 0.6, 1e-15);
  EXPECT_EQ(combine_lambda(1.5, 1.5, 1.5, 0.4, 0.1), 1.0);
  EXPECT_THROW(combine_lambda(0.5, 0.5, 0.5, 0.8, 0.5), Error);
  EXPECT_THROW(combine_lambda(0.5, 0.5, 0.5, -0.1, 0.0), Error);
}

TEST(MixLabels, Examples) {
  const auto ya = row({0.1, 0.8, 0.1}), yb = row({0.5, 0.25, 0.25});
  EXPECT_EQ(mix_labels(ya, yb, 1.0), ya);
  EXPECT_EQ(mix_labels(ya, yb, 0.0), yb);
  for (double lam : {0.0, 0.3, 0.77}) {
    const auto m = mix_labels(ya, ya, lam);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(m[k], ya[k], 4e-16);
  }
  const auto m = mix_labels(ya, yb, 0.3);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(m[k], 0.3 * ya[k] + 0.7 * yb[k], 1e-15);
}

TEST(PositiveMask, Examples) {
  const auto a = labels_of({2}, 8, 0.0), b = labels_of({5}, 8, 0.0);
  const auto mask = positive_mask(a.row(0), b.row(0));
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(mask[k], (k == 2 || k == 5) ? 1.0 : 0.0);
  const auto self = positive_mask(labels_of({3}, 8, 0.0).row(0), labels_of({3}, 8, 0.0).row(0));
  EXPECT_EQ(std::count(self.begin(), self.end(), 1.0), 1);
  EXPECT_EQ(self[3], 1.0);
  const auto as = labels_of({2}, 8, 0.1), bs = labels_of({5}, 8, 0.1);
  EXPECT_EQ(positive_mask(as.row(0), bs.row(0)), mask);
  const auto both = positive_mask(a.row(0), b.row(0), PositiveSet::both);
  EXPECT_EQ(std::count(both.begin(), both.end(), 1.0), 0);
  LabelBatch uniform(1, 4);
  for (auto& v : uniform.row(0)) v = 0.25;
  EXPECT_THROW(positive_mask(uniform.row(0), a.row(0).subspan(0, 4)), Error);
}

TEST(Regularizer, Examples) {
  const auto p = row({0.5, 0.2, 0.3});
  EXPECT_EQ(regularizer(p, row({0.7, 0.3, 0.0}), row({0, 0, 0})), 0.0);
  EXPECT_NEAR(regularizer(p, row({0.7, 0.3, 0.0}), row({1, 1, 0})), 0.59, 1e-15);
}

TEST(Regularizer, ScalarOracleAndGradient) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    Tensor z = testutil::random_tensor({1, 5}, rng, -2, 2);
    const auto y = row({0.05, 0.6, 0.05, 0.25, 0.05});
    const auto b = row({0, 1, 0, 1, 0});
    auto f = [&](const Tensor& zz) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += std::exp(zz[k]);
      double r = 0.0;
      for (std::size_t k = 0; k < 5; ++k) r += y[k] * std::max(0.0, b[k] - std::exp(zz[k]) / s);
      return r;
    };
    const Tensor p = softmax(z);
    EXPECT_NEAR(regularizer(p.slice(0), y, b), f(z), 1e-15);
    const auto g = regularizer_logits_grad(p.slice(0), y, b);
    for (std::size_t k = 0; k < 5; ++k) {
      Tensor zp = z, zm = z;
      zp[k] += 1e-5;
      zm[k] -= 1e-5;
      EXPECT_LT(testutil::rel_err(g[k], (f(zp) - f(zm)) / 2e-5), 1e-4);
    }
  }
}

TEST(Regularizer, ZeroWhenHingeInactive) {
  // Only the b = 0 side can be inactive for a softmax row short of p = 1.
  const auto g = regularizer_logits_grad(row({0.2, 0.3, 0.5}), row({0.1, 0.2, 0.7}), row({0, 0, 0}));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(LumixLoss, ReducesToPlainCutmix) {
  Rng rng(3);
  const Tensor z = testutil::random_tensor({4, 6}, rng, -3, 3);
  const auto la = labels_of({0, 1, 2, 3}, 6, 0.1), lb = labels_of({5, 1, 4, 0}, 6, 0.1);
  const std::vector<double> lam0 = {0.3, 0.6, 0.25, 0.9};
  LumixConfig cfg;
  cfg.r1 = cfg.r2 = 0.0;
  cfg.enable_reg = false;
  Rng lr(4);
  const auto res = lumix_loss(z, la, lb, plan_with(lam0), cfg, lr);
  const auto plain = soft_ce_loss(z, mixed_targets(la, lb, lam0));
  EXPECT_EQ(res.loss.value, plain.value);
  EXPECT_TRUE(res.loss.logits_grad == plain.logits_grad);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(res.targets.lambdas[i].lambda_final, lam0[i]);
}

TEST(LumixLoss, UnmixedLimit) {
  Rng rng(5);
  const Tensor z = testutil::random_tensor({3, 4}, rng);
  const auto la = labels_of({0, 1, 2}, 4, 0.1), lb = labels_of({3, 3, 0}, 4, 0.1);
  LumixConfig cfg;
  cfg.r1 = cfg.r2 = 0.0;
  cfg.enable_reg = false;
  Rng lr(6);
  const auto res = lumix_loss(z, la, lb, plan_with({1.0, 1.0, 1.0}), cfg, lr);
  EXPECT_EQ(res.loss.value, soft_ce_loss(z, la).value);
}

TEST(LumixLoss, MatchesScalarPipeline) {
  Rng rng(7);
  const Tensor z = testutil::random_tensor({4, 6}, rng, -3, 3);
  const std::vector<int> ca = {0, 2, 4, 5}, cb = {1, 2, 3, 0};
  const std::vector<double> lam0 = {0.2, 0.55, 0.8, 0.05};
  LumixConfig cfg;  // defaults: r1 0.4, r2 0.1, eta 1, eps 0.1, Beta(2, 2)
  Rng draw(8), replay(8);
  const auto res = lumix_loss(z, labels_of(ca, 6, 0.1), labels_of(cb, 6, 0.1), plan_with(lam0), cfg, draw);

  oracle::Instance in;
  for (std::size_t i = 0; i < 4; ++i) in.logits.emplace_back(z.slice(i).begin(), z.slice(i).end());
  in.class_a = ca;
  in.class_b = cb;
  in.lambda0 = lam0;
  for (int i = 0; i < 4; ++i) in.lambda_r.push_back(sample_beta(2.0, 2.0, replay));
  in.eps = 0.1;
  in.r1 = 0.4;
  in.r2 = 0.1;
  in.eta = 1.0;
  const auto ref = oracle::evaluate(in);
  EXPECT_NEAR(res.loss.value, ref.total, 1e-12);
  EXPECT_NEAR(res.base_loss, ref.l0, 1e-12);
  EXPECT_NEAR(res.reg, ref.reg, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(res.targets.lambdas[i].lambda_final, ref.lambda_final[i], 1e-15);
  EXPECT_TRUE(draw == replay);
}

TEST(LumixLoss, BceVariantMatchesScalarPipeline) {
  Rng rng(9);
  const Tensor z = testutil::random_tensor({3, 5}, rng, -3, 3);
  const std::vector<int> ca = {0, 1, 4}, cb = {2, 1, 3};
  const std::vector<double> lam0 = {0.4, 0.5, 0.9};
  LumixConfig cfg;
  cfg.loss_kind = LossKind::bce;
  cfg.lambda_r_dist = LambdaRDist::gaussian;
  cfg.gauss_mu = 0.0;
  cfg.gauss_sigma = 1.0;
  cfg.eta = 0.5;
  Rng draw(10), replay(10);
  const auto res = lumix_loss(z, labels_of(ca, 5, 0.1), labels_of(cb, 5, 0.1), plan_with(lam0), cfg, draw);
  oracle::Instance in;
  for (std::size_t i = 0; i < 3; ++i) in.logits.emplace_back(z.slice(i).begin(), z.slice(i).end());
  in.class_a = ca;
  in.class_b = cb;
  in.lambda0 = lam0;
  for (int i = 0; i < 3; ++i) in.lambda_r.push_back(std::clamp(sample_gaussian(0.0, 1.0, replay), 0.0, 1.0));
  in.eps = 0.1;
  in.r1 = 0.4;
  in.r2 = 0.1;
  in.eta = 0.5;
  in.bce = true;
  EXPECT_NEAR(res.loss.value, oracle::evaluate(in).total, 1e-12);
  for (const auto& l : res.targets.lambdas) {
    EXPECT_GE(l.lambda_r, 0.0);
    EXPECT_LE(l.lambda_r, 1.0);
  }
}

TEST(LumixLoss, NoLambdaRDistribution) {
  Rng rng(11);
  const Tensor z = testutil::random_tensor({2, 3}, rng);
  LumixConfig cfg;
  cfg.lambda_r_dist = LambdaRDist::none;
  Rng draw(12), untouched(12);
  const auto res = lumix_loss(z, labels_of({0, 1}, 3, 0.1), labels_of({2, 0}, 3, 0.1), plan_with({0.3, 0.7}), cfg, draw);
  EXPECT_TRUE(draw == untouched);
  for (const auto& l : res.targets.lambdas) {
    EXPECT_TRUE(std::isnan(l.lambda_r));
    EXPECT_NEAR(l.lambda_final, 0.9 * l.lambda0 + 0.1 * l.lambda_s, 1e-15);
  }
}

TEST(LumixLoss, InvalidConfigRejectedBeforeDrawing) {
  Rng rng(13);
  const Tensor z = testutil::random_tensor({2, 3}, rng);
  LumixConfig cfg;
  cfg.r1 = 0.8;
  cfg.r2 = 0.5;
  Rng draw(14), untouched(14);
  EXPECT_THROW(lumix_loss(z, labels_of({0, 1}, 3, 0.1), labels_of({2, 0}, 3, 0.1), plan_with({0.3, 0.7}), cfg, draw),
               Error);
  EXPECT_TRUE(draw == untouched);
}

TEST(LumixLoss, FrozenTargetsCarryNoLambdaGradient) {
  // Targets built from one set of logits, loss evaluated at another: the L0
  // gradient is exactly the soft-CE gradient against the frozen targets.
  Rng rng(15);
  const Tensor z1 = testutil::random_tensor({3, 4}, rng, -2, 2);
  const Tensor z2 = testutil::random_tensor({3, 4}, rng, -2, 2);
  const auto la = labels_of({0, 1, 2}, 4, 0.1), lb = labels_of({3, 2, 0}, 4, 0.1);
  LumixConfig cfg;
  cfg.enable_reg = false;
  Rng r(16);
  const auto targets = build_lumix_targets(z1, la, lb, std::vector<double>{0.2, 0.5, 0.7}, cfg, r);
  const auto res = loss_from_targets(z2, targets, cfg);
  const auto ce = soft_ce_loss(z2, targets.mixed);
  EXPECT_EQ(res.loss.value, ce.value);
  EXPECT_TRUE(res.loss.logits_grad == ce.logits_grad);
}

TEST(LumixLoss, LogitsGradientMatchesFiniteDifferences) {
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    const Tensor z = testutil::random_tensor({3, 5}, rng, -2, 2);
    const auto la = labels_of({0, 1, 2}, 5, 0.1), lb = labels_of({3, 4, 2}, 5, 0.1);
    LumixConfig cfg;
    cfg.eta = 0.7;
    Rng r(18 + t);
    const auto targets = build_lumix_targets(z, la, lb, std::vector<double>{0.2, 0.5, 0.7}, cfg, r);
    const auto res = loss_from_targets(z, targets, cfg);
    for (std::size_t q = 0; q < z.size(); ++q) {
      Tensor zp = z, zm = z;
      zp[q] += 1e-5;
      zm[q] -= 1e-5;
      const double fd =
          (loss_from_targets(zp, targets, cfg).loss.value - loss_from_targets(zm, targets, cfg).loss.value) / 2e-5;
      EXPECT_LT(testutil::rel_err(res.loss.logits_grad[q], fd), 1e-4);
    }
  }
}

TEST(LumixLoss, FuzzedInvariants) {
  Rng rng(19);
  for (int t = 0; t < 300; ++t) {
    const std::size_t B = 1 + sample_index(6, rng), C = 2 + sample_index(6, rng);
    const Tensor z = testutil::random_tensor({B, C}, rng, -10, 10);
    std::vector<int> ca(B), cb(B);
    std::vector<double> lam0(B);
    for (std::size_t i = 0; i < B; ++i) {
      ca[i] = static_cast<int>(sample_index(C, rng));
      cb[i] = static_cast<int>(sample_index(C, rng));
      lam0[i] = sample_uniform(rng);
    }
    LumixConfig cfg;
    cfg.r1 = 0.5 * sample_uniform(rng);
    cfg.r2 = 0.5 * sample_uniform(rng);
    cfg.lambda_r_dist = t % 2 ? LambdaRDist::beta : LambdaRDist::gaussian;
    cfg.gauss_sigma = 5.0;
    const auto res = lumix_loss(z, labels_of(ca, C, 0.1), labels_of(cb, C, 0.1), plan_with(lam0), cfg, rng);
    EXPECT_GE(res.reg, 0.0);
    for (std::size_t i = 0; i < B; ++i) {
      const auto& l = res.targets.lambdas[i];
      EXPECT_GE(l.lambda_final, 0.0);
      EXPECT_LE(l.lambda_final, 1.0);
      EXPECT_TRUE(on_simplex(res.targets.mixed.row(i), 1e-12));
    }
  }
}
