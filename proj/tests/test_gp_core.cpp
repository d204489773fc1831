#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "drgp/gp_core.hpp"
#include "drgp/kernels.hpp"
#include "support.hpp"

using namespace drgp;
using drgp::test::random_points;

namespace {

const VectorKernel unit_rbf{VectorKernelFamily::Rbf, 1.0, 1.0};

FittedGP<VectorKernel> single_point_fit(double y, double noise) {
  return fit_exact_gp<VectorKernel>({Eigen::VectorXd::Zero(1)}, Eigen::VectorXd::Constant(1, y), unit_rbf, noise);
}

} // namespace

TEST(CholeskyPsd, IdentityNeedsNoJitter) {
  const CholeskyResult c = cholesky_psd(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(c.jitter, 0.0);
  EXPECT_TRUE(c.lower.isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(CholeskyPsd, HandFactor) {
  Eigen::MatrixXd a(2, 2);
  a << 4, 2, 2, 3;
  const CholeskyResult c = cholesky_psd(a);
  EXPECT_EQ(c.jitter, 0.0);
  EXPECT_NEAR(c.lower(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(c.lower(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(c.lower(1, 1), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(c.lower(0, 1), 0.0);
  EXPECT_LT((c.lower * c.lower.transpose() - a).norm(), 1e-14);
}

TEST(CholeskyPsd, RankOneGetsJitter) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(2, 2);
  const CholeskyResult c = cholesky_psd(a);
  EXPECT_GT(c.jitter, 0.0);
  const Eigen::MatrixXd diff = c.lower * c.lower.transpose() - a;
  EXPECT_LE(diff.cwiseAbs().maxCoeff(), c.jitter + 1e-14);
}

TEST(CholeskyPsd, IndefiniteFails) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  EXPECT_THROW(cholesky_psd(a), NotFactorizable);
}

TEST(CholeskyPsd, RejectsAsymmetric) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0.5, 0.2, 1;
  EXPECT_THROW(cholesky_psd(a), InvalidArgument);
}

TEST(FitExactGp, OnePointWeights) {
  EXPECT_DOUBLE_EQ(single_point_fit(2.0, 0.0).weights[0], 2.0);
  EXPECT_DOUBLE_EQ(single_point_fit(2.0, 1.0).weights[0], 1.0);
}

TEST(FitExactGp, RejectsEmptyAndMismatch) {
  EXPECT_THROW(fit_exact_gp<VectorKernel>({}, Eigen::VectorXd(0), unit_rbf, 0.0), InvalidArgument);
  EXPECT_THROW(fit_exact_gp<VectorKernel>({Eigen::VectorXd::Zero(1)}, Eigen::VectorXd::Zero(2), unit_rbf, 0.0),
               DimensionMismatch);
}

TEST(FitExactGp, CholeskyReconstructsGram) {
  Rng rng(11);
  const auto x = random_points(rng, 30, 3);
  const Eigen::VectorXd y = test::normal_vector(rng, 30);
  const VectorKernel k{VectorKernelFamily::MaternHalf, 1.3, 0.8};
  const auto gp = fit_exact_gp(x, y, k, 0.1);
  Eigen::MatrixXd g = k.gram(std::span<const Eigen::VectorXd>(x), std::span<const Eigen::VectorXd>(x));
  EXPECT_LE((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  g.diagonal().array() += 0.1;
  EXPECT_LE((gp.chol_lower * gp.chol_lower.transpose() - g).norm() / g.norm(), 1e-8);
}

TEST(Posterior, OnePointNoiseless) {
  const auto gp = single_point_fit(2.0, 0.0);
  const std::vector<Eigen::VectorXd> test = {Eigen::VectorXd::Zero(1)};
  const GaussianPosterior post = posterior(gp, std::span<const Eigen::VectorXd>(test));
  EXPECT_DOUBLE_EQ(post.means[0], 2.0);
  EXPECT_NEAR(post.cov(0, 0), 0.0, 1e-15);
}

TEST(Posterior, OnePointNoisy) {
  const auto gp = single_point_fit(2.0, 1.0);
  const std::vector<Eigen::VectorXd> test = {Eigen::VectorXd::Zero(1)};
  const GaussianPosterior post = posterior(gp, std::span<const Eigen::VectorXd>(test));
  EXPECT_DOUBLE_EQ(post.means[0], 1.0);
  EXPECT_DOUBLE_EQ(post.cov(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(post.per_point_sd[0], std::sqrt(0.5));
}

// Posterior mean equals sum_i c_i k(x*, x_i) with c = (K + noise I)^-1 y,
// evaluated independently of the library's matrix path.
TEST(Posterior, RepresenterIdentity) {
  Rng rng(2024);
  for (int instance = 0; instance < 20; ++instance) {
    const Eigen::Index d = 1 + instance % 4;
    const std::size_t n = 5 + static_cast<std::size_t>(instance) * 2;
    const auto x = random_points(rng, n, d);
    const Eigen::VectorXd y = test::normal_vector(rng, static_cast<Eigen::Index>(n));
    const VectorKernel k{instance % 2 ? VectorKernelFamily::Rbf : VectorKernelFamily::MaternHalf,
                         test::uniform(rng, 0.5, 2.0), test::uniform(rng, 0.5, 2.0)};
    const double noise = test::uniform(rng, 0.01, 0.5);
    const auto gp = fit_exact_gp(x, y, k, noise);

    Eigen::MatrixXd a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a(i, j) = k(x[i], x[j]) + (i == j ? noise : 0.0);
      }
    }
    const Eigen::VectorXd c = a.fullPivLu().solve(y);

    const auto test_pts = random_points(rng, 50, d);
    const GaussianPosterior post = posterior(gp, std::span<const Eigen::VectorXd>(test_pts));
    for (std::size_t m = 0; m < test_pts.size(); ++m) {
      double expected = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        expected += c[static_cast<Eigen::Index>(i)] * k(test_pts[m], x[i]);
      }
      EXPECT_NEAR(post.means[static_cast<Eigen::Index>(m)], expected, 1e-10);
    }
  }
}

TEST(Posterior, NoiselessInterpolation) {
  Rng rng(5);
  for (int instance = 0; instance < 10; ++instance) {
    const auto x = random_points(rng, 15, 2);
    const Eigen::VectorXd y = test::normal_vector(rng, 15, 3.0);
    const auto gp = fit_exact_gp(x, y, VectorKernel{VectorKernelFamily::MaternHalf, 1.0, 1.0}, 0.0);
    const GaussianPosterior post = posterior(gp, std::span<const Eigen::VectorXd>(x));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      EXPECT_NEAR(post.means[i], y[i], 1e-6 * std::max(1.0, std::abs(y[i])));
    }
  }
}

TEST(Posterior, CovarianceIsSymmetricPsd) {
  Rng rng(8);
  for (int instance = 0; instance < 10; ++instance) {
    const auto x = random_points(rng, 20, 2);
    const auto gp = fit_exact_gp(x, test::normal_vector(rng, 20), unit_rbf, 0.05);
    const auto t = random_points(rng, 25, 2);
    const GaussianPosterior post = posterior(gp, std::span<const Eigen::VectorXd>(t));
    EXPECT_LE((post.cov - post.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    const auto [lo, hi] = test::eigen_range(post.cov);
    EXPECT_GE(lo, -1e-6 * hi);
    EXPECT_GE(post.cov.diagonal().minCoeff(), -1e-8);
    for (Eigen::Index i = 0; i < post.cov.rows(); ++i) {
      EXPECT_DOUBLE_EQ(post.per_point_sd[i] * post.per_point_sd[i], std::max(0.0, post.cov(i, i)));
    }
  }
}

TEST(Posterior, TestDimensionMismatch) {
  const auto gp = single_point_fit(1.0, 0.0);
  EXPECT_THROW(posterior_from_cross(gp, Eigen::MatrixXd::Zero(1, 3), Eigen::MatrixXd::Zero(1, 1)),
               DimensionMismatch);
}

TEST(LogMarginalLikelihood, ScalarCases) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(log_marginal_likelihood(single_point_fit(0.0, 0.0)), -half_log_2pi, 1e-15);
  EXPECT_NEAR(log_marginal_likelihood(single_point_fit(1.0, 0.0)), -0.5 - half_log_2pi, 1e-15);
  EXPECT_NEAR(-half_log_2pi, -0.918939, 1e-6);
}

TEST(LogMarginalLikelihood, ZeroTargetsKeepOnlyDeterminant) {
  Rng rng(3);
  const auto x = random_points(rng, 12, 2);
  const auto gp = fit_exact_gp(x, Eigen::VectorXd::Zero(12), unit_rbf, 0.2);
  const double expected = -0.5 * log_det_from_cholesky(gp.chol_lower) - 6.0 * std::log(2.0 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(log_marginal_likelihood(gp), expected);
}

TEST(LogMarginalLikelihood, DecreasesForLargeNoise) {
  Rng rng(4);
  for (int instance = 0; instance < 10; ++instance) {
    const auto x = random_points(rng, 10, 2);
    const Eigen::VectorXd y = test::normal_vector(rng, 10);
    double previous = std::numeric_limits<double>::infinity();
    for (double noise : {1.0, 10.0, 100.0, 1000.0}) {
      const double lml = log_marginal_likelihood(fit_exact_gp(x, y, unit_rbf, noise));
      EXPECT_LT(lml, previous);
      previous = lml;
    }
  }
}

TEST(SamplePosterior, ZeroCovarianceReturnsMeans) {
  const Eigen::Vector3d means(1.0, -2.0, 3.5);
  const GaussianPosterior post = GaussianPosterior::from_moments(means, Eigen::MatrixXd::Zero(3, 3));
  const Eigen::MatrixXd s = sample_posterior(post, 4, 1);
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    EXPECT_EQ(s.row(r).transpose(), means);
  }
}

TEST(SamplePosterior, DeterministicPerSeed) {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.3, 0.3, 2.0;
  const GaussianPosterior post = GaussianPosterior::from_moments(Eigen::Vector2d(0.0, 1.0), cov);
  EXPECT_EQ(sample_posterior(post, 10, 77), sample_posterior(post, 10, 77));
  EXPECT_NE(sample_posterior(post, 10, 77), sample_posterior(post, 10, 78));
}

TEST(SamplePosterior, MomentsMatch) {
  const GaussianPosterior post =
      GaussianPosterior::from_moments(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  const Eigen::VectorXd s = sample_posterior(post, 100000, 9).col(0);
  const double mean = s.mean();
  const double var = (s.array() - mean).square().sum() / static_cast<double>(s.size() - 1);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(SamplePosterior, RejectsZeroCount) {
  const GaussianPosterior post =
      GaussianPosterior::from_moments(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_THROW(sample_posterior(post, 0, 1), InvalidArgument);
}
