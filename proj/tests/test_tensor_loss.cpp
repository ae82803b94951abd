#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lumix/labels.hpp"
#include "lumix/loss.hpp"
#include "lumix/tensor.hpp"
#include "test_util.hpp"

using namespace lumix;

TEST(Tensor, ShapeAndData) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}), Error);
  t.at(0, 1) = std::nan("");
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), Error);
}

TEST(Softmax, UniformOnZeros) {
  const Tensor p = softmax(Tensor({1, 3}, 0.0));
  for (double v : p.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(1);
  const Tensor z = testutil::random_tensor({4, 5}, rng, -3, 3);
  Tensor shifted = z;
  for (auto& v : shifted.values()) v += 123.25;
  const Tensor a = softmax(z), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Softmax, HighPrecisionOracle) {
  const Tensor p = softmax(Tensor({1, 2}, std::vector<double>{1.0, 2.0}));
  EXPECT_NEAR(p[0], 0.268941421369995, 1e-12);
  EXPECT_NEAR(p[1], 0.731058578630005, 1e-12);
}

TEST(Softmax, RowsSumToOneForLargeLogits) {
  Rng rng(2);
  const Tensor z = testutil::random_tensor({50, 7}, rng, -1000, 1000);
  const Tensor p = softmax(z);
  for (std::size_t i = 0; i < 50; ++i) {
    double s = 0.0;
    for (double v : p.slice(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, RejectsNonFiniteAndSingleClass) {
  Tensor z({1, 3}, 0.0);
  z[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax(z), Error);
  EXPECT_THROW(softmax(Tensor({2, 1}, 0.0)), Error);
}

TEST(Labels, OneHotAndSmoothed) {
  const int idx[] = {2};
  const LabelBatch a = build_labels(idx, 4, 0.0);
  EXPECT_EQ(std::vector<double>(a.row(0).begin(), a.row(0).end()), (std::vector<double>{0, 0, 1, 0}));
  const int idx2[] = {3, 0, 9};
  const LabelBatch b = build_labels(idx2, 10, 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
      const double want = static_cast<int>(k) == idx2[i] ? 0.91 : 0.01;
      EXPECT_NEAR(b.row(i)[k], want, 1e-15);
      s += b.row(i)[k];
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  const int bad[] = {4};
  EXPECT_THROW(build_labels(bad, 4, 0.0), Error);
  const int neg[] = {-1};
  EXPECT_THROW(build_labels(neg, 4, 0.0), Error);
}

TEST(SoftCe, ConfidentCorrectLimit) {
  Tensor z({1, 3}, 0.0);
  z[1] = 40.0;
  const int idx[] = {1};
  EXPECT_LT(soft_ce_loss(z, build_labels(idx, 3, 0.0)).value, 1e-12);
}

TEST(SoftCe, UniformTargetZeroLogits) {
  for (std::size_t c : {2u, 5u, 10u}) {
    LabelBatch y(3, c);
    for (auto& v : y.tensor().values()) v = 1.0 / static_cast<double>(c);
    EXPECT_NEAR(soft_ce_loss(Tensor({3, c}, 0.0), y).value, std::log(static_cast<double>(c)), 1e-14);
  }
}

TEST(SoftCe, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const Tensor z = testutil::random_tensor({2, 3}, rng, -2, 2);
  LabelBatch y(2, 3);
  const double rows[2][3] = {{0.2, 0.5, 0.3}, {0.7, 0.1, 0.2}};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 3; ++k) y.row(i)[k] = rows[i][k];
  // Scalar formula, independent of the library.
  auto f = [&](const Tensor& t) {
    double total = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += std::exp(t.at(i, k));
      for (std::size_t k = 0; k < 3; ++k) total -= rows[i][k] * (t.at(i, k) - std::log(s));
    }
    return total / 2.0;
  };
  const LossOutput out = soft_ce_loss(z, y);
  EXPECT_NEAR(out.value, f(z), 1e-13);
  const double h = 1e-5;
  for (std::size_t q = 0; q < z.size(); ++q) {
    Tensor zp = z, zm = z;
    zp[q] += h;
    zm[q] -= h;
    const double fd = (f(zp) - f(zm)) / (2 * h);
    EXPECT_LT(testutil::rel_err(out.logits_grad[q], fd), 1e-6);
  }
}

TEST(SoftCe, NonNegativeOnSimplexTargets) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor z = testutil::random_tensor({3, 4}, rng, -5, 5);
    LabelBatch y(3, 4);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (auto& v : y.row(i)) s += (v = sample_uniform(rng));
      for (auto& v : y.row(i)) v /= s;
    }
    EXPECT_GE(soft_ce_loss(z, y).value, 0.0);
  }
}

TEST(SoftCe, RejectsOffSimplexAndShapeMismatch) {
  LabelBatch y(1, 3);
  y.row(0)[0] = 0.5;
  y.row(0)[1] = 0.6;
  EXPECT_THROW(soft_ce_loss(Tensor({1, 3}, 0.0), y), Error);
  LabelBatch ok(1, 3);
  ok.row(0)[0] = 1.0;
  EXPECT_THROW(soft_ce_loss(Tensor({2, 3}, 0.0), ok), Error);
}

TEST(Bce, LimitsAndLn2) {
  LabelBatch y(1, 2);
  Tensor z({1, 2}, std::vector<double>{-30.0, 0.0});
  y.row(0)[0] = 0.0;
  y.row(0)[1] = 0.5;
  const double total = bce_loss(z, y).value * 2.0;
  // First term is log1p(e^-30) ~ 9.4e-14; the second is ln 2.
  EXPECT_NEAR(total - std::log(2.0), std::log1p(std::exp(-30.0)), 1e-15);
  EXPECT_LT(std::log1p(std::exp(-30.0)), 1e-12);
}

TEST(Bce, ScalarLoopOracleAndGradient) {
  Rng rng(5);
  const Tensor z = testutil::random_tensor({2, 4}, rng, -3, 3);
  LabelBatch y(2, 4);
  for (auto& v : y.tensor().values()) v = sample_uniform(rng);
  auto f = [&](const Tensor& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < 4; ++k) {
        const double p = 1.0 / (1.0 + std::exp(-t.at(i, k)));
        const double yk = y.row(i)[k];
        s += -(yk * std::log(p) + (1 - yk) * std::log(1 - p));
      }
    return s / 8.0;
  };
  const LossOutput out = bce_loss(z, y);
  EXPECT_NEAR(out.value, f(z), 1e-12);
  const double h = 1e-5;
  for (std::size_t q = 0; q < z.size(); ++q) {
    Tensor zp = z, zm = z;
    zp[q] += h;
    zm[q] -= h;
    EXPECT_LT(testutil::rel_err(out.logits_grad[q], (f(zp) - f(zm)) / (2 * h)), 1e-6);
  }
}

TEST(Bce, RejectsOutOfRangeTargets) {
  LabelBatch y(1, 2);
  y.row(0)[0] = 1.2;
  EXPECT_THROW(bce_loss(Tensor({1, 2}, 0.0), y), Error);
}
