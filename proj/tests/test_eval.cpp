#include <gtest/gtest.h>

#include <cmath>

#include "drgp/eval.hpp"
#include "drgp/response.hpp"
#include "support.hpp"

using namespace drgp;

TEST(Coverage, Examples) {
  const Eigen::Vector3d lo(-1, -1, -1), hi(1, 1, 1);
  EXPECT_EQ(coverage_90(Eigen::Vector3d(0, 0, 0), lo, hi), 1.0);
  EXPECT_DOUBLE_EQ(coverage_90(Eigen::Vector3d(0, 0, 5), lo, hi), 2.0 / 3.0);
  EXPECT_EQ(coverage_90(Eigen::Vector3d(1, -1, 0), lo, hi), 1.0);
  EXPECT_THROW(coverage_90(Eigen::Vector3d::Zero(), hi, lo), MisorderedInterval);
}

TEST(IntervalLength, Examples) {
  const Eigen::Vector3d lo(-1, -1, -1), hi(1, 1, 1);
  EXPECT_EQ(interval_length_90(lo, hi), 2.0);
  EXPECT_EQ(interval_length_90(hi, hi), 0.0);
  EXPECT_THROW(interval_length_90(hi, lo), MisorderedInterval);
}

TEST(BiasRmse, Examples) {
  const Eigen::Vector2d tau(0, 0);
  const BiasRmse exact = bias_and_rmse(tau, tau.transpose());
  EXPECT_EQ(exact.bias, 0.0);
  EXPECT_EQ(exact.rmse, 0.0);
  Eigen::MatrixXd one(1, 2);
  one << 1, -1;
  const BiasRmse r = bias_and_rmse(tau, one);
  EXPECT_EQ(r.bias, 0.0);
  EXPECT_EQ(r.rmse, 1.0);
  EXPECT_THROW(bias_and_rmse(tau, Eigen::MatrixXd(0, 2)), InvalidArgument);
}

TEST(BiasRmse, ConstantOffset) {
  Rng rng(1);
  const Eigen::VectorXd tau = test::normal_vector(rng, 10);
  Eigen::MatrixXd samples(5, 10);
  for (Eigen::Index j = 0; j < 5; ++j) {
    samples.row(j) = (tau.array() + 0.7).matrix().transpose();
  }
  const BiasRmse r = bias_and_rmse(tau, samples);
  EXPECT_NEAR(r.bias, -0.7, 1e-12);
  EXPECT_GE(r.rmse, 0.7 - 1e-12);
}

TEST(BiasRmse, JensenPerSample) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const Eigen::VectorXd tau = test::normal_vector(rng, 8);
    const Eigen::MatrixXd sample = test::normal_vector(rng, 8, 2.0).transpose();
    const BiasRmse r = bias_and_rmse(tau, sample);
    EXPECT_GE(r.rmse, std::abs(r.bias));
    EXPECT_GE(r.rmse * r.rmse, r.bias * r.bias);
  }
}

TEST(Metrics, PermutationInvariant) {
  Rng rng(3);
  const Eigen::VectorXd tau = test::normal_vector(rng, 12);
  const Eigen::VectorXd lo = test::normal_vector(rng, 12).array() - 1.0;
  const Eigen::VectorXd hi = lo.array() + test::normal_vector(rng, 12).array().abs() * 2.0;
  const Eigen::MatrixXd samples = Eigen::MatrixXd::NullaryExpr(4, 12, [&] { return standard_normal(rng); });
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(12);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 12, rng);
  EXPECT_DOUBLE_EQ(coverage_90(perm * tau, perm * lo, perm * hi), coverage_90(tau, lo, hi));
  EXPECT_NEAR(interval_length_90(perm * lo, perm * hi), interval_length_90(lo, hi), 1e-14);
  const Eigen::MatrixXd permuted = samples * perm.transpose();
  const BiasRmse a = bias_and_rmse(tau, samples), b = bias_and_rmse(perm * tau, permuted);
  EXPECT_NEAR(a.bias, b.bias, 1e-14);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-14);
}

// tau drawn from the posterior itself falls inside the 90% interval 90% of
// the time.
TEST(Calibration, SelfTest) {
  Rng rng(4);
  const int trials = 10000;
  Eigen::VectorXd means(trials), sd(trials), tau(trials);
  for (int i = 0; i < trials; ++i) {
    means[i] = 3.0 * standard_normal(rng);
    sd[i] = test::uniform(rng, 0.1, 2.0);
    tau[i] = means[i] + sd[i] * standard_normal(rng);
  }
  const GaussianPosterior post = GaussianPosterior::from_moments(means, sd.cwiseAbs2().asDiagonal().toDenseMatrix());
  const CredibleIntervals ci = credible_interval(post, 0.90);
  EXPECT_NEAR(coverage_90(tau, ci.lower, ci.upper), 0.90, 0.02);
}

TEST(Quantile, Type7) {
  EXPECT_EQ(quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.05), 1.15);
  EXPECT_EQ(quantile({5.0}, 0.95), 5.0);
}

TEST(LeastSquares, MatchesNormalEquations) {
  Rng rng(5);
  const Eigen::MatrixXd x = with_intercept(Eigen::MatrixXd::NullaryExpr(10, 3, [&] { return standard_normal(rng); }));
  const Eigen::VectorXd y = test::normal_vector(rng, 10);
  const Eigen::VectorXd expected = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  EXPECT_LE((least_squares(x, y) - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LeastSquares, SingularDesign) {
  Eigen::MatrixXd x(5, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10;
  EXPECT_THROW(least_squares(x, Eigen::VectorXd::Ones(5)), SingularDesign);
}

TEST(HiBaseline, RecoversExactLinearLaw) {
  Rng rng(6);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(60, 2, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x.col(0) + test::normal_vector(rng, 60);
  const Eigen::VectorXd y = (2.0 * t.array() + 1.0).matrix();
  const HiResult r = hi_baseline(x, t, y, HiOptions{.n_bootstrap = 5, .seed = 1});
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(r.estimate[i], 2.0 * t[i] + 1.0, 1e-6);
  }
  const Eigen::VectorXd curve = r.model.adrf(Eigen::Vector2d(0.0, 1.0));
  EXPECT_NEAR(curve[0], 1.0, 1e-6);
  EXPECT_NEAR(curve[1] - curve[0], 2.0, 1e-6);
}

TEST(HiBaseline, SingleBootstrapHasZeroWidth) {
  Rng rng(7);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(40, 2, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x.col(0) + test::normal_vector(rng, 40);
  const Eigen::VectorXd y = t.array().square() + x.col(1).array() + test::normal_vector(rng, 40).array();
  const HiResult r = hi_baseline(x, t, y, HiOptions{.n_bootstrap = 1, .seed = 3});
  EXPECT_EQ(interval_length_90(r.lower, r.upper), 0.0);
  EXPECT_EQ(r.bootstrap.rows(), 1);
}

TEST(HiBaseline, BootstrapDeterministic) {
  Rng rng(8);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(40, 2, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x.col(0) + test::normal_vector(rng, 40);
  const Eigen::VectorXd y = t + test::normal_vector(rng, 40);
  const HiResult a = hi_baseline(x, t, y, HiOptions{.n_bootstrap = 20, .seed = 5});
  const HiResult b = hi_baseline(x, t, y, HiOptions{.n_bootstrap = 20, .seed = 5});
  EXPECT_EQ(a.bootstrap, b.bootstrap);
  EXPECT_TRUE((a.lower.array() <= a.upper.array()).all());
}

TEST(HiBaseline, AffineInvariantInCovariates) {
  Rng rng(9);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(50, 3, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x * Eigen::Vector3d(0.5, -1.0, 0.2) + test::normal_vector(rng, 50);
  const Eigen::VectorXd y = t.array().square() + x.col(0).array() + test::normal_vector(rng, 50).array();
  Eigen::MatrixXd scaled = x;
  scaled.col(0) = 3.0 * x.col(0).array() + 7.0;
  scaled.col(2) = -0.1 * x.col(2).array() - 2.0;
  const HiModel a = fit_hi(x, t, y), b = fit_hi(scaled, t, y);
  EXPECT_LE((a.fitted(t) - b.fitted(t)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(HiBaseline, TooFewUnits) {
  EXPECT_THROW(fit_hi(Eigen::MatrixXd::Zero(5, 2), Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5)), TooFewUnits);
}
