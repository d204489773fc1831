#include "CLI11.hpp"

#include "drgp/drgp.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

namespace {

using drgp::Json;

// Exit statuses.
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses a flag value with a library parser; failures are usage errors that
// name the flag.
template <typename F>
auto parse_flag(const std::string &flag, const std::string &value, F parse) {
  try {
    return parse(value);
  } catch (const drgp::InvalidArgument &e) {
    throw UsageError(flag + ": " + e.what());
  }
}

Json read_json(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw drgp::InvalidArgument("cannot open '" + path + "'");
  }
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw drgp::InvalidArgument(path + ": " + e.what());
  }
}

void write_json(const std::string &path, const Json &j) { drgp::write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string dgp = "full";
  std::size_t n = 250;
  std::string mu = "nonlinear";
  std::string effect = "homogeneous";
  std::string surface = "A";
  std::string pi_formula = "as-written";
  std::string covariates;
  std::string target = "conditional";
  std::size_t oracle_population = drgp::default_oracle_population;
  std::uint64_t seed = 1;
  std::string out;
};

// Scenario keys describing the data-generating process; shared by the
// simulate sidecar and plot-data.
Json dgp_json(const SimulateArgs &a) {
  Json j;
  j["dgp"] = a.dgp;
  j["n"] = a.n;
  if (a.dgp == "full") {
    j["mu"] = a.mu;
    j["pi_formula"] = a.pi_formula;
  } else {
    j["surface"] = a.surface;
    if (!a.covariates.empty()) {
      j["covariates"] = a.covariates;
    }
  }
  j["effect"] = a.effect;
  j["oracle_population"] = a.oracle_population;
  j["adrf_target"] = a.target;
  j["methods"] = Json::array({"hi"});
  return j;
}

int run_simulate(const SimulateArgs &a) {
  const Json dgp = dgp_json(a);
  drgp::ScenarioSpec spec;
  try {
    spec = drgp::scenario_from_json(dgp);
  } catch (const drgp::InvalidArgument &e) {
    throw UsageError(e.what());
  }
  const drgp::Replication rep = drgp::generate_replication(spec, a.seed);
  drgp::write_text(a.out, drgp::simulated_dataset_csv(rep.data));
  Json side;
  side["scenario"] = dgp;
  side["seed"] = a.seed;
  side["data_seed"] = drgp::derive_seed(a.seed, "data");
  side["oracle_seed"] = drgp::derive_seed(a.seed, "oracle");
  side["dgp_id"] = rep.data.dgp_id;
  side["n"] = rep.data.size();
  side["covariate_names"] = rep.data.covariate_names;
  if (spec.dgp == drgp::DgpKind::Full) {
    side["mu_sd"] = rep.mu_sd;
  }
  if (rep.coefficients) {
    Json c;
    c["feature_names"] = rep.coefficients->feature_names;
    c["beta"] = std::vector<double>(rep.coefficients->beta.data(),
                                    rep.coefficients->beta.data() + rep.coefficients->beta.size());
    c["offset"] = rep.coefficients->offset;
    side["coefficients"] = c;
  }
  write_json(a.out + ".json", side);
  return kOk;
}

// ---------------------------------------------------------------------------
// fit-ps
// ---------------------------------------------------------------------------

drgp::PropensityConfig ps_config_from_json(const Json &p) {
  drgp::PropensityConfig c;
  if (p.contains("kernel")) {
    c.kernel_family = drgp::parse_vector_kernel_family(p.at("kernel").get<std::string>());
  }
  c.epochs = p.value("epochs", c.epochs);
  c.learning_rate = p.value("learning_rate", c.learning_rate);
  if (p.contains("variance")) {
    const std::string v = p.at("variance").get<std::string>();
    if (v != "epistemic" && v != "predictive") {
      throw drgp::InvalidArgument("variance must be epistemic or predictive");
    }
    c.variance_mode = v == "epistemic" ? drgp::PsVarianceMode::Epistemic : drgp::PsVarianceMode::Predictive;
  }
  return c;
}

struct FitPsArgs {
  std::string data;
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
};

int run_fit_ps(const FitPsArgs &a) {
  // A config holds either one propensity config or {"candidates": [...]},
  // in which case the candidate with the smallest |out-of-fold bias| wins.
  std::vector<drgp::PropensityConfig> candidates;
  if (a.config.empty()) {
    candidates.emplace_back();
  } else {
    const Json j = read_json(a.config);
    try {
      if (j.contains("candidates")) {
        for (const Json &c : j.at("candidates")) {
          candidates.push_back(ps_config_from_json(c));
        }
      } else {
        candidates.push_back(ps_config_from_json(j));
      }
    } catch (const drgp::InvalidArgument &e) {
      throw UsageError(std::string("--config: ") + e.what());
    }
  }
  const std::uint64_t ps_seed = drgp::derive_seed(a.seed, "ps");
  for (drgp::PropensityConfig &c : candidates) {
    c.seed = ps_seed;
  }
  drgp::DatasetSchema schema;
  schema.require_response = false;
  const drgp::Dataset d = drgp::read_dataset(a.data, schema);
  const drgp::PropensitySelection sel = drgp::select_propensity_model(candidates, d.x, d.t);
  drgp::write_text(a.out, drgp::ps_csv(sel.estimates));
  if (candidates.size() > 1 && drgp::log_enabled(drgp::LogLevel::Info)) {
    drgp::log(drgp::LogLevel::Info, "fit-ps: selected candidate " + std::to_string(sel.chosen));
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// fit-response, estimate, plot-data
// ---------------------------------------------------------------------------

struct FitResponseArgs {
  std::string data;
  std::string ps;
  std::string kernel = "a-prbf";
  int epochs = 7000;
  double lr = 0.0025;
  std::string mode = "pointwise";
  std::uint64_t seed = 1;
  std::string out;
  std::string report;
};

void write_posterior(const std::string &path, const Eigen::VectorXd &doses, const drgp::GaussianPosterior &post) {
  drgp::write_text(path, drgp::posterior_csv(doses, post, drgp::credible_interval(post, 0.90)));
}

Eigen::VectorXd treatments_of(const drgp::ResponseFit &fit) {
  const auto &rows = fit.gp.train_inputs;
  Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[static_cast<Eigen::Index>(i)] = rows[i].treatment;
  }
  return t;
}

int run_fit_response(const FitResponseArgs &a) {
  const drgp::KernelVariant variant{parse_flag("--kernel", a.kernel, drgp::parse_kernel_tag)};
  const drgp::AdrfMode mode = parse_flag("--mode", a.mode, drgp::parse_adrf_mode);
  const drgp::Dataset d = drgp::read_dataset(a.data);
  const std::vector<drgp::PropensityEstimate> ps = drgp::ps_from_csv(drgp::read_csv(a.ps));
  const std::vector<drgp::ThetaRow> rows = drgp::theta_rows(d.x, d.t, ps);
  drgp::ResponseOptions options;
  options.adam.epochs = a.epochs;
  options.adam.learning_rate = a.lr;
  options.seed = drgp::derive_seed(a.seed, drgp::to_string(variant.tag));
  const drgp::ResponseFit fit = drgp::fit_response(rows, d.y, variant, options);
  write_posterior(a.out, d.t, drgp::adrf_posterior(fit, rows, mode));
  write_json(a.report.empty() ? a.out + ".json" : a.report, drgp::fit_report_json(fit));
  return kOk;
}

// Doses: "observed", a comma-separated list, or "grid:lo:hi:count".
std::optional<Eigen::VectorXd> parse_doses(const std::string &spec) {
  if (spec == "observed") {
    return std::nullopt;
  }
  auto number = [&](const std::string &s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) {
        throw std::invalid_argument(s);
      }
      return v;
    } catch (const std::exception &) {
      throw UsageError("--at: '" + s + "' is not a number");
    }
  };
  std::vector<std::string> parts;
  std::string cur;
  const bool grid = spec.rfind("grid:", 0) == 0;
  const std::string body = grid ? spec.substr(5) : spec;
  const char sep = grid ? ':' : ',';
  for (char c : body) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (grid) {
    if (parts.size() != 3) {
      throw UsageError("--at: grid form is grid:lo:hi:count");
    }
    const double lo = number(parts[0]);
    const double hi = number(parts[1]);
    const double count = number(parts[2]);
    if (!(count >= 1.0) || count != std::floor(count) || !(lo <= hi)) {
      throw UsageError("--at: grid needs lo <= hi and a positive integer count");
    }
    const Eigen::Index k = static_cast<Eigen::Index>(count);
    return k == 1 ? Eigen::VectorXd::Constant(1, lo) : Eigen::VectorXd(Eigen::VectorXd::LinSpaced(k, lo, hi));
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = number(parts[i]);
  }
  return out;
}

struct EstimateArgs {
  std::string fit;
  std::string at = "observed";
  std::string mode = "pointwise";
  std::string out;
};

int run_estimate(const EstimateArgs &a) {
  const drgp::AdrfMode mode = parse_flag("--mode", a.mode, drgp::parse_adrf_mode);
  const std::optional<Eigen::VectorXd> doses = parse_doses(a.at);
  const drgp::ResponseFit fit = drgp::response_fit_from_json(read_json(a.fit));
  const std::span<const drgp::ThetaRow> rows(fit.gp.train_inputs);
  if (doses) {
    // Off-sample doses have no covariates of their own, so the curve
    // averages the response surface over the training population.
    write_posterior(a.out, *doses, drgp::adrf_curve(fit, rows, *doses));
  } else {
    write_posterior(a.out, treatments_of(fit), drgp::adrf_posterior(fit, rows, mode));
  }
  return kOk;
}

struct PlotDataArgs {
  std::string fit;
  std::string truth;
  std::string mode = "pointwise";
  std::string out;
};

int run_plot_data(const PlotDataArgs &a) {
  const drgp::AdrfMode mode = parse_flag("--mode", a.mode, drgp::parse_adrf_mode);
  const drgp::ResponseFit fit = drgp::response_fit_from_json(read_json(a.fit));
  const Json side = read_json(a.truth);
  const drgp::ScenarioSpec spec = drgp::scenario_from_json(side.at("scenario"));
  const drgp::Replication rep = drgp::generate_replication(spec, side.at("seed").get<std::uint64_t>());
  const Eigen::VectorXd t = treatments_of(fit);
  const Eigen::VectorXd tau = rep.oracle.evaluate(t);
  const drgp::GaussianPosterior post = drgp::adrf_posterior(fit, fit.gp.train_inputs, mode);
  const drgp::CredibleIntervals ci = drgp::credible_interval(post, 0.90);
  std::string csv = drgp::join_csv({"unit_index", "t", "adrf_mean", "lo90", "hi90", "tau_true"});
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    csv += drgp::join_csv({std::to_string(i), drgp::format_double(t[i]), drgp::format_double(post.means[i]),
                           drgp::format_double(ci.lower[i]), drgp::format_double(ci.upper[i]),
                           drgp::format_double(tau[i])});
  }
  drgp::write_text(a.out, csv);
  return kOk;
}

// ---------------------------------------------------------------------------
// mmd, benchmark
// ---------------------------------------------------------------------------

struct MmdArgs {
  std::string ps;
  double gamma = 1.0;
  double lengthscale = 1.0;
  std::string out;
};

int run_mmd(const MmdArgs &a) {
  if (!(a.gamma > 0.0) || !(a.lengthscale > 0.0)) {
    throw UsageError("--gamma and --lengthscale must be positive");
  }
  const std::vector<drgp::PropensityEstimate> ps = drgp::ps_from_csv(drgp::read_csv(a.ps));
  std::vector<drgp::GaussianInput> inputs;
  for (const drgp::PropensityEstimate &e : ps) {
    inputs.push_back(drgp::GaussianInput::scalar(e.mean, e.variance));
  }
  const Eigen::MatrixXd m = drgp::mmd_matrix(inputs, a.gamma * a.gamma, a.lengthscale);
  std::string csv = drgp::join_csv({"unit_i", "unit_j", "mmd_sq"});
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = i + 1; j < ps.size(); ++j) {
      csv += drgp::join_csv({std::to_string(ps[i].unit_index), std::to_string(ps[j].unit_index),
                             drgp::format_double(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))});
    }
  }
  drgp::write_text(a.out, csv);
  return kOk;
}

struct BenchmarkArgs {
  std::string scenario;
  std::string out;
  unsigned threads = 0; // 0 keeps the scenario's value
};

int run_benchmark(const BenchmarkArgs &a) {
  drgp::ScenarioSpec spec;
  try {
    spec = drgp::read_scenario(a.scenario);
  } catch (const drgp::InvalidArgument &e) {
    throw UsageError(std::string("--scenario: ") + e.what());
  }
  if (a.threads > 0) {
    spec.threads = a.threads;
  }
  const std::vector<drgp::MetricsRecord> records = drgp::run_experiment(spec);
  drgp::write_text(a.out, drgp::results_csv(records));
  write_json(a.out + ".json", drgp::results_json(spec, records));
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Gaussian-process dose-response estimation"};
  app.require_subcommand(1);
  bool verbose = false;
  bool debug = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
  app.add_flag("--debug", debug, "Log numerical diagnostics to stderr");

  std::function<int()> action;

  SimulateArgs sim;
  CLI::App *c_sim = app.add_subcommand("simulate", "Generate a simulated dataset and its truth sidecar");
  c_sim->add_option("--dgp", sim.dgp, "full | ihdp")->check(CLI::IsMember({"full", "ihdp"}));
  c_sim->add_option("--n", sim.n, "Number of units")->check(CLI::PositiveNumber);
  c_sim->add_option("--mu", sim.mu, "linear | nonlinear (full)")->check(CLI::IsMember({"linear", "nonlinear"}));
  c_sim->add_option("--effect", sim.effect, "homogeneous | heterogeneous")
      ->check(CLI::IsMember({"homogeneous", "heterogeneous"}));
  c_sim->add_option("--surface", sim.surface, "A | B | C (ihdp)")->check(CLI::IsMember({"A", "B", "C"}));
  c_sim->add_option("--pi-formula", sim.pi_formula, "as-written | ancestor (full)")
      ->check(CLI::IsMember({"as-written", "ancestor"}));
  c_sim->add_option("--covariates", sim.covariates, "Covariate CSV for ihdp (default: synthetic)");
  c_sim->add_option("--target", sim.target, "conditional | marginal")
      ->check(CLI::IsMember({"conditional", "marginal"}));
  c_sim->add_option("--oracle-population", sim.oracle_population, "Monte-Carlo population size")
      ->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "Replication seed");
  c_sim->add_option("--out", sim.out, "Output CSV (sidecar written to <out>.json)")->required();
  c_sim->callback([&] { action = [&] { return run_simulate(sim); }; });

  FitPsArgs fps;
  CLI::App *c_ps = app.add_subcommand("fit-ps", "Cross-fitted propensity scores");
  c_ps->add_option("--data", fps.data, "Dataset CSV")->required();
  c_ps->add_option("--config", fps.config, "Propensity config JSON");
  c_ps->add_option("--seed", fps.seed, "Replication seed");
  c_ps->add_option("--out", fps.out, "Output PS CSV")->required();
  c_ps->callback([&] { action = [&] { return run_fit_ps(fps); }; });

  FitResponseArgs fr;
  CLI::App *c_fr = app.add_subcommand("fit-response", "Fit the response GP and write the ADRF posterior");
  c_fr->add_option("--data", fr.data, "Dataset CSV")->required();
  c_fr->add_option("--ps", fr.ps, "PS CSV")->required();
  c_fr->add_option("--kernel", fr.kernel, drgp::valid_kernel_names());
  c_fr->add_option("--epochs", fr.epochs, "Adam epochs")->check(CLI::PositiveNumber);
  c_fr->add_option("--lr", fr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  c_fr->add_option("--mode", fr.mode, "pointwise | population-average");
  c_fr->add_option("--seed", fr.seed, "Replication seed");
  c_fr->add_option("--out", fr.out, "Posterior CSV")->required();
  c_fr->add_option("--report", fr.report, "Fit report JSON (default <out>.json)");
  c_fr->callback([&] { action = [&] { return run_fit_response(fr); }; });

  EstimateArgs est;
  CLI::App *c_est = app.add_subcommand("estimate", "ADRF posterior from a fit report");
  c_est->add_option("--fit", est.fit, "Fit report JSON")->required();
  c_est->add_option("--at", est.at, "observed | t1,t2,... | grid:lo:hi:count");
  c_est->add_option("--mode", est.mode, "pointwise | population-average (observed doses only)");
  c_est->add_option("--out", est.out, "Posterior CSV")->required();
  c_est->callback([&] { action = [&] { return run_estimate(est); }; });

  MmdArgs mmd;
  CLI::App *c_mmd = app.add_subcommand("mmd", "Pairwise MMD^2 between PS posteriors");
  c_mmd->add_option("--ps", mmd.ps, "PS CSV")->required();
  c_mmd->add_option("--gamma", mmd.gamma, "Output scale gamma (squared internally)");
  c_mmd->add_option("--lengthscale", mmd.lengthscale, "Base-kernel length-scale");
  c_mmd->add_option("--out", mmd.out, "Output CSV")->required();
  c_mmd->callback([&] { action = [&] { return run_mmd(mmd); }; });

  BenchmarkArgs bench;
  CLI::App *c_b = app.add_subcommand("benchmark", "Run a scenario and write the results table");
  c_b->add_option("--scenario", bench.scenario, "Scenario JSON")->required();
  c_b->add_option("--out", bench.out, "Results CSV (JSON written to <out>.json)")->required();
  c_b->add_option("--threads", bench.threads, "Worker threads (overrides the scenario)");
  c_b->callback([&] { action = [&] { return run_benchmark(bench); }; });

  PlotDataArgs plot;
  CLI::App *c_plot = app.add_subcommand("plot-data", "Per-unit posterior and true ADRF for plotting");
  c_plot->add_option("--fit", plot.fit, "Fit report JSON")->required();
  c_plot->add_option("--truth", plot.truth, "Sidecar JSON written by simulate")->required();
  c_plot->add_option("--mode", plot.mode, "pointwise | population-average");
  c_plot->add_option("--out", plot.out, "Output CSV")->required();
  c_plot->callback([&] { action = [&] { return run_plot_data(plot); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }
  drgp::set_log_level(debug ? drgp::LogLevel::Debug : (verbose ? drgp::LogLevel::Info : drgp::LogLevel::Warning));
  try {
    return action();
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const drgp::Error &e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
