#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "drgp/propensity.hpp"
#include "drgp/response.hpp"
#include "drgp/simgen.hpp"
#include "support.hpp"

using namespace drgp;

TEST(SplitFolds, Sizes) {
  Folds f = split_folds(4, 1);
  EXPECT_EQ(f.first.size(), 2U);
  EXPECT_EQ(f.second.size(), 2U);
  f = split_folds(5, 1);
  EXPECT_EQ(std::min(f.first.size(), f.second.size()), 2U);
  EXPECT_EQ(std::max(f.first.size(), f.second.size()), 3U);
}

TEST(SplitFolds, PartitionAndDeterminism) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Folds f = split_folds(37, seed);
    std::set<std::size_t> all(f.first.begin(), f.first.end());
    for (std::size_t i : f.second) {
      EXPECT_TRUE(all.insert(i).second) << "unit in both folds";
    }
    EXPECT_EQ(all.size(), 37U);
    EXPECT_EQ(*all.rbegin(), 36U);
    const Folds g = split_folds(37, seed);
    EXPECT_EQ(f.first, g.first);
    EXPECT_EQ(f.second, g.second);
  }
  EXPECT_NE(split_folds(37, 1).first, split_folds(37, 2).first);
}

TEST(SplitFolds, TooFewUnits) { EXPECT_THROW(split_folds(3, 0), TooFewUnits); }

TEST(FitPropensity, ConstantTarget) {
  Rng rng(1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(50, 1, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(50, 4.0);
  const PropensityFit fit = fit_propensity(x, t);
  const std::vector<Eigen::VectorXd> rows = matrix_rows(x);
  const GaussianPosterior post = posterior(fit.gp, std::span<const Eigen::VectorXd>(rows));
  for (Eigen::Index i = 0; i < 50; ++i) {
    EXPECT_NEAR(post.means[i], 4.0, 0.05 * 4.0);
  }
}

TEST(FitPropensity, TraceSettles) {
  Rng rng(2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(50, 1, [&] { return test::uniform(rng, -2, 2); });
  const Eigen::VectorXd t = x.col(0).array().sin() + 0.1 * x.col(0).array().square();
  const PropensityFit fit = fit_propensity(x, t);
  ASSERT_EQ(fit.trace.size(), 1001U);
  for (std::size_t i = fit.trace.size() - 100; i + 1 < fit.trace.size(); ++i) {
    EXPECT_GE(fit.trace[i + 1], fit.trace[i] - 1e-3);
  }
}

TEST(FitPropensity, RejectsSingleUnit) {
  EXPECT_THROW(fit_propensity(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)), TooFewUnits);
}

TEST(CrossFittedScores, BeatsMeanPredictor) {
  Rng rng(3);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(50, 1, [&] { return test::uniform(rng, -2, 2); });
  const Eigen::VectorXd t = 2.0 * x.col(0).array().sin();
  PropensityConfig cfg;
  cfg.seed = 5;
  const std::vector<PropensityEstimate> est = cross_fitted_scores(x, t, cfg);
  const CandidateDiagnostics d = propensity_diagnostics(est, t);
  EXPECT_LT(d.rmse, sample_sd(t));
}

TEST(CrossFittedScores, EachUnitScoredOnceByOtherFold) {
  Rng rng(4);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(21, 2, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x.rowwise().sum();
  PropensityConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 9;
  const std::vector<PropensityEstimate> est = cross_fitted_scores(x, t, cfg);
  ASSERT_EQ(est.size(), 21U);
  const Folds folds = split_folds(21, cfg.seed);
  for (std::size_t i = 0; i < est.size(); ++i) {
    EXPECT_EQ(est[i].unit_index, i);
    EXPECT_GE(est[i].variance, 0.0);
    // fold 0 is `first`; the unit must be held out from the model that scored it.
    const auto &own = est[i].fold == 0 ? folds.first : folds.second;
    EXPECT_NE(std::find(own.begin(), own.end(), i), own.end());
  }
  const std::vector<PropensityEstimate> again = cross_fitted_scores(x, t, cfg);
  for (std::size_t i = 0; i < est.size(); ++i) {
    EXPECT_EQ(est[i].mean, again[i].mean);
    EXPECT_EQ(est[i].variance, again[i].variance);
  }
}

TEST(CrossFittedScores, PredictiveVarianceAddsNoise) {
  Rng rng(5);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(20, 1, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x.col(0) + 0.3 * test::normal_vector(rng, 20);
  PropensityConfig cfg;
  cfg.epochs = 100;
  const auto epistemic = cross_fitted_scores(x, t, cfg);
  cfg.variance_mode = PsVarianceMode::Predictive;
  const auto predictive = cross_fitted_scores(x, t, cfg);
  for (std::size_t i = 0; i < epistemic.size(); ++i) {
    EXPECT_EQ(epistemic[i].mean, predictive[i].mean);
    EXPECT_GT(predictive[i].variance, epistemic[i].variance);
  }
}

// In the full simulation eta = pi + N(0, 1) and pi varies little, so the
// fit must find the unit dosage noise and scores that track pi on average.
TEST(CrossFittedScores, FullSimulationPropensity) {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const FullSimulation sim = gen_full_sim(FullSimConfig{}, seed);
    PropensityConfig cfg;
    cfg.seed = derive_seed(seed, "ps");
    const PropensityFit fit = fit_propensity(sim.data.x, sim.data.t, cfg);
    EXPECT_NEAR(fit.gp.noise_var, 1.0, 0.25) << "seed " << seed;
    const auto est = cross_fitted_scores(sim.data.x, sim.data.t, cfg);
    Eigen::VectorXd mean(static_cast<Eigen::Index>(est.size()));
    for (const PropensityEstimate &e : est) {
      mean[static_cast<Eigen::Index>(e.unit_index)] = e.mean;
    }
    const Eigen::ArrayXd a = mean.array() - mean.mean();
    const Eigen::ArrayXd b = sim.data.pi_true.array() - sim.data.pi_true.mean();
    total += (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
  }
  EXPECT_GT(total / 10.0, 0.1);
}

TEST(Selection, SingleCandidate) {
  Rng rng(6);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(12, 1, [&] { return standard_normal(rng); });
  const Eigen::VectorXd t = x.col(0);
  PropensityConfig only;
  only.kernel_family = VectorKernelFamily::Rbf;
  only.epochs = 20;
  const std::vector<PropensityConfig> cands = {only};
  const PropensitySelection sel = select_propensity_model(cands, x, t);
  EXPECT_EQ(sel.chosen, 0U);
  EXPECT_EQ(sel.config.kernel_family, VectorKernelFamily::Rbf);
  ASSERT_EQ(sel.diagnostics.size(), 1U);
  EXPECT_EQ(sel.estimates.size(), 12U);
}

TEST(Selection, ShiftedCandidateLoses) {
  const Eigen::VectorXd t = Eigen::Vector4d(1, 2, 3, 4);
  std::vector<PropensityEstimate> exact, shifted;
  for (std::size_t i = 0; i < 4; ++i) {
    const double ti = t[static_cast<Eigen::Index>(i)];
    exact.push_back({i, ti + (i % 2 ? 0.1 : -0.1), 0.0, 0});
    shifted.push_back({i, ti + 0.5, 0.0, 0});
  }
  const std::vector<CandidateDiagnostics> d = {propensity_diagnostics(shifted, t), propensity_diagnostics(exact, t)};
  EXPECT_NEAR(d[0].signed_bias, 4 * 0.5, 1e-12);
  EXPECT_EQ(select_by_bias(d), 1U);
}

TEST(Selection, AbsoluteBiasAndTies) {
  const std::vector<CandidateDiagnostics> d = {{-3.0, 0.1}, {2.0, 5.0}, {-2.0, 0.1}};
  EXPECT_EQ(select_by_bias(d), 1U);
  const std::vector<CandidateDiagnostics> tie = {{1.0, 9.0}, {1.0, 0.0}};
  EXPECT_EQ(select_by_bias(tie), 0U);
  EXPECT_THROW(select_by_bias(std::span<const CandidateDiagnostics>{}), InvalidArgument);
}
