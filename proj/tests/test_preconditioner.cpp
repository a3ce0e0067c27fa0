// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "jorge/eig.hpp"
#include "jorge/op_counters.hpp"
#include "jorge/preconditioner.hpp"
#include "jorge/rng.hpp"
#include "fixtures/generated_fixtures.h"
#include "test_support.hpp"

using jorge::DenseMatrix;
using jorge::ExpansionOrder;
using testsupport::rel_err;

TEST(InitPreconditioners, EpsilonOneGivesIdentity) {
  const auto pair = jorge::init_preconditioners(2, 3, 1.0);
  EXPECT_LT(rel_err(pair.left, DenseMatrix::identity(2)), 1e-15);
  EXPECT_LT(rel_err(pair.right, DenseMatrix::identity(3)), 1e-15);
  EXPECT_EQ(0, pair.last_update_step);
}

TEST(InitPreconditioners, EpsilonSixteenGivesHalf) {
  const auto pair = jorge::init_preconditioners(1, 1, 16.0);
  EXPECT_DOUBLE_EQ(0.5, pair.left(0, 0));
  EXPECT_DOUBLE_EQ(0.5, pair.right(0, 0));
}

TEST(InitPreconditioners, SmallEpsilonInflates) {
  const auto pair = jorge::init_preconditioners(8, 4, 1e-6);
  const double want = std::pow(1e-6, -0.25);
  EXPECT_NEAR(31.6228, want, 1e-4);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(want, pair.left(i, i));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(want, pair.right(i, i));
  EXPECT_DOUBLE_EQ(0.0, pair.left(0, 1));
}

TEST(InitPreconditioners, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(jorge::init_preconditioners(2, 2, 0.0), jorge::ConfigError);
  EXPECT_THROW(jorge::init_preconditioners(2, 2, -1.0), jorge::ConfigError);
}

TEST(DynamicBeta2, KnownValues) {
  EXPECT_DOUBLE_EQ(0.5, jorge::dynamic_beta2(1.0));
  EXPECT_DOUBLE_EQ(0.75, jorge::dynamic_beta2(3.0));
  EXPECT_NEAR(0.999999000001, jorge::dynamic_beta2(1e6), 1e-15);
}

TEST(DynamicBeta2, StrictlyIncreasing) {
  double prev = 0.0;
  for (double x : {1e-6, 1e-3, 0.5, 1.0, 10.0, 1e4}) {
    const double b = jorge::dynamic_beta2(x);
    EXPECT_GT(b, prev);
    EXPECT_GT(b, 0.0);
    EXPECT_LT(b, 1.0);
    prev = b;
  }
}

TEST(DynamicBeta2, RejectsNonPositiveNorm) {
  EXPECT_THROW(jorge::dynamic_beta2(0.0), std::domain_error);
  EXPECT_THROW(jorge::dynamic_beta2(-1.0), std::domain_error);
}

TEST(UpdateLeft, ScalarClosedForm) {
  // Lhat = 1, g = 1: X = 1, beta2 = 1/2, and the truncated update gives
  // 2^{1/4} * (1 - 1/4 + 5/32). The exact tracked value is
  // (beta2 * Lhat^{-4} + (1-beta2) g^2)^{-1/4} = 1, so the truncation error
  // is about 7.8%.
  const DenseMatrix lhat(1, 1, {1.0});
  const DenseMatrix g(1, 1, {1.0});
  const auto up = jorge::update_left(lhat, g, ExpansionOrder::second);
  ASSERT_FALSE(up.skipped);
  EXPECT_DOUBLE_EQ(1.0, up.x_norm);
  EXPECT_DOUBLE_EQ(0.5, up.beta2);
  const double want = std::pow(2.0, 0.25) * (1.0 - 0.25 + 5.0 / 32.0);
  EXPECT_DOUBLE_EQ(want, up.factor(0, 0));
  EXPECT_NEAR(1.077722, up.factor(0, 0), 1e-5);
  EXPECT_NEAR(0.0777, up.factor(0, 0) - 1.0, 1e-3);  // truncation error vs exact 1.0
}

TEST(UpdateLeft, ZeroGradientSkips) {
  const DenseMatrix lhat = DenseMatrix::identity(3);
  const DenseMatrix g(3, 4);
  const auto up = jorge::update_left(lhat, g, ExpansionOrder::second);
  EXPECT_TRUE(up.skipped);
  EXPECT_EQ(0.0, rel_err(up.factor, lhat));
}

TEST(UpdateLeft, ShapeMismatchThrows) {
  EXPECT_THROW(jorge::update_left(DenseMatrix::identity(3), DenseMatrix(2, 4),
                                  ExpansionOrder::second),
               jorge::ShapeError);
  EXPECT_THROW(jorge::update_left(DenseMatrix(3, 2), DenseMatrix(3, 4), ExpansionOrder::second),
               jorge::ShapeError);
}

TEST(UpdateRight, ScalarMirrorsLeft) {
  const DenseMatrix rhat(1, 1, {1.0});
  const DenseMatrix g(1, 1, {1.0});
  const auto up = jorge::update_right(rhat, g, ExpansionOrder::second);
  ASSERT_FALSE(up.skipped);
  EXPECT_NEAR(1.077722, up.factor(0, 0), 1e-5);
}

TEST(UpdateRight, SymmetricOutputForOrthonormalRows) {
  // grad with orthonormal rows, Rhat = I: X_R = G^T G
  const DenseMatrix g(2, 3, {1, 0, 0, 0, 1, 0});
  const auto up = jorge::update_right(DenseMatrix::identity(3), g, ExpansionOrder::second);
  ASSERT_FALSE(up.skipped);
  EXPECT_LT(rel_err(up.factor, transpose(up.factor)), 1e-15);
}

// Straight-line transcription of the update formula, written independently
// of the library implementation (explicit loops, no shared helpers).
static DenseMatrix oracle_right_update(const DenseMatrix& rhat, const DenseMatrix& g, int order) {
  const std::size_t n = rhat.rows();
  const DenseMatrix gtg = testsupport::naive_matmul(jorge::transpose(g), g);
  const DenseMatrix r2 = testsupport::naive_matmul(rhat, rhat);
  const DenseMatrix r4 = testsupport::naive_matmul(r2, r2);
  const DenseMatrix x = testsupport::naive_matmul(r4, gtg);
  double xn = 0.0;
  for (double v : x.data()) xn += v * v;
  xn = std::sqrt(xn);

  DenseMatrix series = DenseMatrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) series(i, j) -= x(i, j) / (4.0 * xn);
  if (order == 2) {
    const DenseMatrix x2 = testsupport::naive_matmul(x, x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) series(i, j) += 5.0 * x2(i, j) / (32.0 * xn * xn);
  }
  DenseMatrix out = testsupport::naive_matmul(rhat, series);
  const double lead = std::pow((xn + 1.0) / xn, 0.25);
  for (double& v : out.data()) v *= lead;
  DenseMatrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (out(i, j) + out(j, i));
  return sym;
}

TEST(UpdateRight, MatchesFormulaTranscription) {
  jorge::Rng rng(77);
  const DenseMatrix g = testsupport::random_matrix(3, 5, rng);
  for (int order : {1, 2}) {
    const auto up = jorge::update_right(DenseMatrix::identity(5), g,
                                        order == 1 ? ExpansionOrder::first
                                                   : ExpansionOrder::second);
    ASSERT_FALSE(up.skipped);
    const DenseMatrix want = oracle_right_update(DenseMatrix::identity(5), g, order);
    EXPECT_LT(rel_err(up.factor, want), 1e-13);
  }
}

TEST(MaybeUpdatePair, FrequencyOneUpdatesEveryStep) {
  jorge::Rng rng(3);
  auto pair = jorge::init_preconditioners(2, 2, 1.0);
  for (long step = 1; step <= 4; ++step) {
    const DenseMatrix g = testsupport::random_matrix(2, 2, rng);
    auto [next, report] = jorge::maybe_update_pair(pair, g, step, 1, ExpansionOrder::second);
    EXPECT_FALSE(report.skipped);
    EXPECT_EQ(step, next.last_update_step);
    pair = next;
  }
}

TEST(MaybeUpdatePair, FrequencyFiftyFiresAtStep51) {
  jorge::Rng rng(4);
  const auto pair = jorge::init_preconditioners(2, 2, 1.0);
  const DenseMatrix g = testsupport::random_matrix(2, 2, rng);
  {
    auto [next, report] = jorge::maybe_update_pair(pair, g, 50, 50, ExpansionOrder::second);
    EXPECT_TRUE(report.skipped);
  }
  {
    auto [next, report] = jorge::maybe_update_pair(pair, g, 51, 50, ExpansionOrder::second);
    EXPECT_FALSE(report.skipped);
    EXPECT_EQ(51, next.last_update_step);
  }
}

TEST(MaybeUpdatePair, FrequencyFourFiresAtStepsOneAndFive) {
  jorge::Rng rng(5);
  auto pair = jorge::init_preconditioners(2, 2, 1.0);
  std::vector<long> fired;
  for (long step = 1; step <= 8; ++step) {
    const DenseMatrix g = testsupport::random_matrix(2, 2, rng);
    auto [next, report] = jorge::maybe_update_pair(pair, g, step, 4, ExpansionOrder::second);
    if (!report.skipped) fired.push_back(step);
    pair = next;
  }
  EXPECT_EQ((std::vector<long>{1, 5}), fired);
}

TEST(MaybeUpdatePair, StaleReuseIsBitwiseIdentical) {
  jorge::Rng rng(6);
  auto pair = jorge::init_preconditioners(3, 3, 1e-6);
  std::vector<double> window_left, window_right;
  for (long step = 1; step <= 12; ++step) {
    const DenseMatrix g = testsupport::random_matrix(3, 3, rng);
    auto [next, report] = jorge::maybe_update_pair(pair, g, step, 4, ExpansionOrder::second);
    pair = next;
    if ((step - 1) % 4 == 0) {
      window_left.assign(pair.left.data().begin(), pair.left.data().end());
      window_right.assign(pair.right.data().begin(), pair.right.data().end());
    } else {
      ASSERT_EQ(0, std::memcmp(window_left.data(), pair.left.data().data(),
                               window_left.size() * sizeof(double)));
      ASSERT_EQ(0, std::memcmp(window_right.data(), pair.right.data().data(),
                               window_right.size() * sizeof(double)));
    }
  }
}

TEST(MaybeUpdatePair, RejectsBadFreq) {
  const auto pair = jorge::init_preconditioners(2, 2, 1.0);
  EXPECT_THROW(
      jorge::maybe_update_pair(pair, DenseMatrix(2, 2), 1, 0, ExpansionOrder::second),
      jorge::ConfigError);
}

TEST(Precondition, IdentityPairLeavesGradient) {
  const auto pair = jorge::init_preconditioners(2, 3, 1.0);
  const DenseMatrix g(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(0.0, rel_err(jorge::precondition(pair, g), g));
}

TEST(Precondition, ScalarPairScales) {
  jorge::PreconditionerPair pair;
  pair.left = scale(DenseMatrix::identity(2), 2.0);
  pair.right = scale(DenseMatrix::identity(3), 3.0);
  const DenseMatrix g(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_LT(rel_err(jorge::precondition(pair, g), scale(g, 6.0)), 1e-15);
}

TEST(Precondition, FreshPairWithUnitEpsilonIsIdentity) {
  jorge::Rng rng(8);
  const DenseMatrix g = testsupport::random_matrix(4, 6, rng);
  const auto pair = jorge::init_preconditioners(4, 6, 1.0);
  EXPECT_EQ(0.0, rel_err(jorge::precondition(pair, g), g));
}

TEST(Precondition, NeverTouchesEigOrInverse) {
  jorge::Rng rng(9);
  const auto pair = jorge::init_preconditioners(4, 6, 1e-6);
  const DenseMatrix g = testsupport::random_matrix(4, 6, rng);
  const jorge::OpCounters before = jorge::snapshot_op_counters();
  (void)jorge::precondition(pair, g);
  const auto delta = jorge::op_counter_delta(before);
  EXPECT_EQ(0u, delta.at("sym_eig"));
  EXPECT_EQ(0u, delta.at("exact_inv_root"));
}

TEST(DynamicBeta2, EqualityContractAfterUpdates) {
  // after any non-skipped update, ||(1-b2)/b2 * X|| must be 1 to 1e-12
  jorge::Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseMatrix g = testsupport::random_matrix(4, 3, rng);
    const auto ul = jorge::update_left(DenseMatrix::identity(4), g, ExpansionOrder::second);
    ASSERT_FALSE(ul.skipped);
    EXPECT_NEAR(1.0, (1.0 - ul.beta2) / ul.beta2 * ul.x_norm, 1e-12);
    const auto ur = jorge::update_right(DenseMatrix::identity(3), g, ExpansionOrder::second);
    ASSERT_FALSE(ur.skipped);
    EXPECT_NEAR(1.0, (1.0 - ur.beta2) / ur.beta2 * ur.x_norm, 1e-12);
  }
}

TEST(UpdateLeft, SymmetryPreservedOverManySteps) {
  jorge::Rng rng(11);
  auto pair = jorge::init_preconditioners(4, 4, 1e-6);
  for (long step = 1; step <= 50; ++step) {
    const DenseMatrix g = testsupport::random_matrix(4, 4, rng);
    auto [next, report] = jorge::maybe_update_pair(pair, g, step, 1, ExpansionOrder::second);
    pair = next;
    EXPECT_LT(rel_err(pair.left, transpose(pair.left)), 1e-9);
    EXPECT_LT(rel_err(pair.right, transpose(pair.right)), 1e-9);
  }
}

// Tracking check at small scale: the inverse-free factor against exact
// inverse fourth roots of the EMA recurrence driven by the same per-step
// beta2 sequence, bounded by the committed per-step envelope.
TEST(Tracking, FourByFourStaysWithinCommittedEnvelope) {
  const std::vector<double> errors =
      testsupport::tracking_errors(4, 50, ExpansionOrder::second, fixtures::kTrackingSeed4);
  ASSERT_EQ(sizeof(fixtures::kTrackingEnvelope4) / sizeof(double), errors.size())
      << "fixtures out of date; regenerate with make_fixtures";
  for (std::size_t i = 0; i < errors.size(); ++i)
    EXPECT_LE(errors[i], fixtures::kTrackingEnvelope4[i]) << "step " << i + 1;
}

TEST(Tracking, GuardNeverFiresOnRandomGradientStreams) {
  jorge::Rng rng(12);
  auto pair = jorge::init_preconditioners(6, 6, 1e-6);
  for (long step = 1; step <= 100; ++step) {
    const DenseMatrix g = testsupport::random_matrix(6, 6, rng);
    auto [next, report] = jorge::maybe_update_pair(pair, g, step, 1, ExpansionOrder::second);
    ASSERT_FALSE(report.skipped);
    EXPECT_FALSE(report.reset_left);
    EXPECT_FALSE(report.reset_right);
    pair = next;
  }
}

// The guard side of the update: a factor kicked outside the positive-definite
// cone is re-anchored to a trace-preserving identity instead of being allowed
// to flip preconditioned gradients.
TEST(Guard, ReanchorsIndefiniteFactors) {
  jorge::PreconditionerPair pair;
  // strongly ill-conditioned factor plus a shear-heavy gradient: one update
  // pushes the small eigenvalue negative without a guard
  pair.left = DenseMatrix(2, 2, {30.0, 0.0, 0.0, 0.05});
  pair.right = DenseMatrix::identity(3);
  const DenseMatrix g(2, 3, {1e-3, 0, 0, 40.0, 0, 0});
  const auto raw = jorge::update_left(pair.left, g, ExpansionOrder::second);
  ASSERT_FALSE(raw.skipped);
  ASSERT_FALSE(jorge::is_positive_definite(raw.factor));

  auto [next, report] = jorge::maybe_update_pair(pair, g, 1, 1, ExpansionOrder::second);
  EXPECT_TRUE(report.reset_left);
  EXPECT_TRUE(jorge::is_positive_definite(next.left));
  // trace preserved from the previous factor
  EXPECT_NEAR((30.0 + 0.05) / 2.0, next.left(0, 0), 1e-12);
  EXPECT_DOUBLE_EQ(next.left(0, 0), next.left(1, 1));
  EXPECT_DOUBLE_EQ(0.0, next.left(0, 1));
}
