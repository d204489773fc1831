#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "drgp/io.hpp"
#include "drgp/experiment.hpp"
#include "support.hpp"

using namespace drgp;

namespace {

CsvTable parse(const std::string &text) {
  std::istringstream in(text);
  return parse_csv(in, "test");
}

} // namespace

TEST(Csv, ParsesTwoRows) {
  const CsvTable t = parse("x_1,x_2,t,y\n1,2,0.5,3\n4, 5 ,1.5,6\r\n");
  ASSERT_EQ(t.size(), 2U);
  const Dataset d = dataset_from_csv(t);
  EXPECT_EQ(d.covariate_names, (std::vector<std::string>{"x_1", "x_2"}));
  EXPECT_EQ(d.x(1, 1), 5.0);
  EXPECT_EQ(d.t, Eigen::Vector2d(0.5, 1.5));
  EXPECT_EQ(d.y, Eigen::Vector2d(3.0, 6.0));
}

TEST(Csv, MissingTreatmentIsNamed) {
  const CsvTable t = parse("x_1,dose,y\n1,2,3\n");
  try {
    dataset_from_csv(t);
    FAIL() << "expected MissingColumn";
  } catch (const MissingColumn &e) {
    EXPECT_NE(std::string(e.what()).find("'t'"), std::string::npos) << e.what();
  }
  DatasetSchema schema;
  schema.treatment = "dose";
  EXPECT_EQ(dataset_from_csv(t, schema).t[0], 2.0);
}

TEST(Csv, NonNumericCellReportsCoordinates) {
  const CsvTable t = parse("x_1,t,y\n1,2,3\n1,abc,3\n");
  try {
    dataset_from_csv(t);
    FAIL() << "expected NonNumericCell";
  } catch (const NonNumericCell &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'abc'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 't'"), std::string::npos) << msg;
  }
}

TEST(Csv, EmptyFileAndRaggedRows) {
  EXPECT_THROW(parse(""), EmptyFile);
  EXPECT_THROW(parse("\n\n"), EmptyFile);
  EXPECT_THROW(parse("a,b\n1\n"), DimensionMismatch);
}

TEST(Csv, DuplicateRolesRejected) {
  const CsvTable t = parse("x_1,t,y\n1,2,3\n");
  DatasetSchema schema;
  schema.covariates = {"x_1", "t"};
  EXPECT_THROW(dataset_from_csv(t, schema), InvalidArgument);
}

TEST(FormatDouble, RoundTripsExactly) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::ldexp(standard_normal(rng), static_cast<int>(test::uniform(rng, -300, 300)));
    const CsvTable t = parse("v\n" + format_double(v) + "\n");
    EXPECT_EQ(t.numeric_column("v")[0], v);
  }
  for (double v : {0.0, -0.0, 1.0 / 3.0, std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max()}) {
    EXPECT_EQ(parse("v\n" + format_double(v) + "\n").numeric_column("v")[0], v);
  }
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(PsFile, RoundTrip) {
  const std::vector<PropensityEstimate> ps = {{0, 0.1 / 3.0, 0.25, 1}, {1, -2.5e-7, 1e-300, 0}, {2, 7.0, 0.0, 1}};
  const std::vector<PropensityEstimate> back = ps_from_csv(parse(ps_csv(ps)));
  ASSERT_EQ(back.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(back[i].unit_index, ps[i].unit_index);
    EXPECT_EQ(back[i].mean, ps[i].mean);
    EXPECT_EQ(back[i].variance, ps[i].variance);
    EXPECT_EQ(back[i].fold, ps[i].fold);
  }
  EXPECT_THROW(ps_from_csv(parse("unit_index,ps_mean,ps_var\n0,1,-1\n")), NegativeValue);
  EXPECT_THROW(ps_from_csv(parse("unit_index,ps_mean,ps_var\n0.5,1,1\n")), InvalidArgument);
}

TEST(FitReport, RebuildsIdenticalPosterior) {
  Rng rng(2);
  const std::vector<ThetaRow> rows = test::random_rows(rng, 12, 2);
  Eigen::VectorXd y(12);
  for (Eigen::Index i = 0; i < 12; ++i) {
    y[i] = 5.0 + std::sin(rows[static_cast<std::size_t>(i)].treatment) + 0.1 * standard_normal(rng);
  }
  for (KernelTag tag : all_kernel_tags) {
    ResponseOptions options;
    options.adam.epochs = 20;
    const ResponseFit fit = fit_response(rows, y, KernelVariant{tag}, options);
    const Json j = Json::parse(fit_report_json(fit).dump());
    const ResponseFit back = response_fit_from_json(j);
    EXPECT_EQ(back.params.lengthscales, fit.params.lengthscales);
    EXPECT_EQ(back.y_offset, fit.y_offset);
    const GaussianPosterior a = adrf_posterior(fit, rows), b = adrf_posterior(back, rows);
    EXPECT_EQ(a.means, b.means) << to_string(tag);
    EXPECT_EQ(a.cov, b.cov) << to_string(tag);
  }
}

TEST(Scenario, ParsesKeys) {
  const Json j = Json::parse(R"({"name": "s", "dgp": "full", "n": 40, "mu": "linear", "effect": "heterogeneous",
    "methods": ["a-prbf", "hi"], "replications": 3, "base_seed": 10, "epochs": 50,
    "propensity": {"kernel": "rbf", "epochs": 20, "variance": "predictive"}, "adrf_mode": "population-average"})");
  const ScenarioSpec s = scenario_from_json(j);
  EXPECT_EQ(s.name, "s");
  EXPECT_EQ(s.full.n, 40U);
  EXPECT_EQ(s.full.mu, MuVariant::Linear);
  EXPECT_EQ(s.full.effect, EffectVariant::Heterogeneous);
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{10, 11, 12}));
  EXPECT_EQ(s.epochs, 50);
  EXPECT_EQ(s.propensity.kernel_family, VectorKernelFamily::Rbf);
  EXPECT_EQ(s.propensity.variance_mode, PsVarianceMode::Predictive);
  EXPECT_EQ(s.mode, AdrfMode::PopulationAverage);
}

TEST(Scenario, RejectsUnknownAndInvalid) {
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"dgp": "full", "epoch": 5})")), InvalidArgument);
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"dgp": "full", "methods": ["nope"]})")), InvalidArgument);
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"dgp": "bogus"})")), InvalidArgument);
}

TEST(SimulatedCsv, ReadsBackAsDataset) {
  const FullSimulation sim = gen_full_sim(FullSimConfig{.n = 30}, 3);
  const CsvTable t = parse(simulated_dataset_csv(sim.data));
  const Dataset d = dataset_from_csv(t);
  EXPECT_EQ(d.x, sim.data.x);
  EXPECT_EQ(d.t, sim.data.t);
  EXPECT_EQ(d.y, sim.data.y);
  EXPECT_EQ(t.numeric_column("pi_true"), sim.data.pi_true);
}
