#include <gtest/gtest.h>

#include "drgp/experiment.hpp"
#include "drgp/pipeline.hpp"

using namespace drgp;

namespace {

ScenarioSpec small_scenario() {
  ScenarioSpec s;
  s.name = "small";
  s.full.n = 30;
  s.methods = {"a-prbf", "rbf-nd", "hi"};
  s.seeds = {1, 2};
  s.epochs = 30;
  s.propensity.epochs = 30;
  s.posterior_samples = 10;
  s.n_bootstrap = 5;
  s.oracle_population = 2000;
  return s;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

} // namespace

TEST(ThetaRows, MatchesByUnitIndex) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 2);
  const Eigen::Vector3d t(0.1, 0.2, 0.3);
  const std::vector<PropensityEstimate> ps = {{2, 5.0, 0.5, 1}, {0, 3.0, 0.3, 0}, {1, 4.0, 0.4, 1}};
  const std::vector<ThetaRow> rows = theta_rows(x, t, ps);
  ASSERT_EQ(rows.size(), 3U);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[static_cast<std::size_t>(i)].ps_mean, 3.0 + i);
    EXPECT_EQ(rows[static_cast<std::size_t>(i)].ps_var, 0.3 + 0.1 * i);
    EXPECT_EQ(rows[static_cast<std::size_t>(i)].treatment, t[i]);
    EXPECT_EQ(rows[static_cast<std::size_t>(i)].covariates, x.row(i).transpose());
  }
  const std::vector<PropensityEstimate> dup = {{0, 1, 0, 0}, {0, 1, 0, 0}, {1, 1, 0, 0}};
  EXPECT_THROW(theta_rows(x, t, dup), InvalidArgument);
}

TEST(RunExperiment, RecordCountAndOrder) {
  const ScenarioSpec s = small_scenario();
  const std::vector<MetricsRecord> out = run_experiment(s);
  ASSERT_EQ(out.size(), s.methods.size() * s.seeds.size() + s.methods.size());
  for (std::size_t r = 0; r < s.seeds.size(); ++r) {
    for (std::size_t m = 0; m < s.methods.size(); ++m) {
      const MetricsRecord &rec = out[r * s.methods.size() + m];
      EXPECT_EQ(rec.method, s.methods[m]);
      EXPECT_EQ(rec.seed, s.seeds[r]);
      EXPECT_FALSE(rec.aggregate);
      EXPECT_TRUE(rec.ok()) << rec.error;
      EXPECT_GE(rec.cov90, 0.0);
      EXPECT_LE(rec.cov90, 1.0);
      EXPECT_GE(rec.rmse, 0.0);
      EXPECT_EQ(rec.n_units, 30U);
    }
  }
  for (std::size_t m = 0; m < s.methods.size(); ++m) {
    const MetricsRecord &agg = out[s.methods.size() * s.seeds.size() + m];
    EXPECT_TRUE(agg.aggregate);
    EXPECT_EQ(agg.replications, 2U);
    EXPECT_DOUBLE_EQ(agg.cov90, 0.5 * (out[m].cov90 + out[s.methods.size() + m].cov90));
  }
}

TEST(RunExperiment, DeterministicAndThreadIndependent) {
  ScenarioSpec s = small_scenario();
  const std::vector<MetricsRecord> a = run_experiment(s);
  const std::vector<MetricsRecord> b = run_experiment(s);
  s.threads = 2;
  const std::vector<MetricsRecord> c = run_experiment(s);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), c.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (const std::vector<MetricsRecord> *other : {&b, &c}) {
      const MetricsRecord &o = (*other)[i];
      EXPECT_EQ(a[i].method, o.method);
      EXPECT_TRUE(same(a[i].cov90, o.cov90));
      EXPECT_TRUE(same(a[i].i90, o.i90));
      EXPECT_TRUE(same(a[i].bias, o.bias));
      EXPECT_TRUE(same(a[i].rmse, o.rmse));
      EXPECT_TRUE(same(a[i].convergence, o.convergence));
    }
  }
}

TEST(RunExperiment, FailuresAreRecordedPerCell) {
  ScenarioSpec s = small_scenario();
  s.dgp = DgpKind::Ihdp;
  s.ihdp_n = 10; // too few units for the HI regression over 9 covariates
  s.methods = {"hi", "a-prbf"};
  s.seeds = {1};
  const std::vector<MetricsRecord> out = run_experiment(s);
  ASSERT_EQ(out.size(), 4U);
  EXPECT_FALSE(out[0].ok());
  EXPECT_NE(out[0].error.find("TooFewUnits"), std::string::npos);
  EXPECT_TRUE(out[1].ok()) << out[1].error;
  EXPECT_FALSE(out[2].ok());
  EXPECT_EQ(out[2].replications, 0U);
  EXPECT_TRUE(out[3].ok());
}

TEST(ScenarioSpec, Validate) {
  ScenarioSpec s;
  s.methods = {"a-prbf", "bogus"};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.methods = {"hi"};
  s.seeds.clear();
  EXPECT_THROW(s.validate(), InvalidArgument);
}
