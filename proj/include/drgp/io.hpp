#ifndef DRGP_IO_HPP
#define DRGP_IO_HPP

#include <Eigen/Core>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "drgp/errors.hpp"
#include "drgp/experiment.hpp"
#include "drgp/kernels.hpp"
#include "drgp/propensity.hpp"
#include "drgp/response.hpp"
#include "drgp/simgen.hpp"

// Plain CSV (header row, comma separator, no quoting) and JSON interchange.
// Every double is written with 17 significant digits, so files round-trip
// exactly.

namespace drgp {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t size() const { return rows.size(); }

  bool has_column(std::string_view name) const {
    for (const std::string &h : header) {
      if (h == name) {
        return true;
      }
    }
    return false;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) {
        return j;
      }
    }
    throw MissingColumn("missing column '" + std::string(name) + "'");
  }

  /// Column parsed as doubles. Data rows are numbered from 1.
  Eigen::VectorXd numeric_column(std::string_view name) const {
    const std::size_t j = index_of(name);
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string &cell = rows[i][j];
      double v = 0.0;
      const char *first = cell.data();
      const char *last = first + cell.size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last || cell.empty()) {
        throw NonNumericCell("non-numeric cell '" + cell + "' at row " + std::to_string(i + 1) + ", column '" +
                             std::string(name) + "' (" + std::to_string(j + 1) + ")");
      }
      out[static_cast<Eigen::Index>(i)] = v;
    }
    return out;
  }
};

namespace detail {
inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const std::size_t a = cell.find_first_not_of(" \t");
    const std::size_t b = cell.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? std::string{} : cell.substr(a, b - a + 1));
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}
} // namespace detail

inline CsvTable parse_csv(std::istream &in, const std::string &source = "input") {
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") {
      continue;
    }
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DimensionMismatch(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " cells, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) {
    throw EmptyFile(source + ": no header row");
  }
  return table;
}

inline CsvTable read_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("cannot open '" + path + "'");
  }
  return parse_csv(in, path);
}

inline void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InvalidArgument("cannot write '" + path + "'");
  }
  out << text;
}

inline std::string join_csv(const std::vector<std::string> &cells) {
  std::string line;
  for (std::size_t j = 0; j < cells.size(); ++j) {
    if (j > 0) {
      line += ',';
    }
    line += cells[j];
  }
  line += '\n';
  return line;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Column roles of a dataset file. An empty covariate list selects every
/// column whose name starts with "x_", in file order.
struct DatasetSchema {
  std::vector<std::string> covariates;
  std::string treatment = "t";
  std::string response = "y";
  bool require_response = true;
};

struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd t;
  Eigen::VectorXd y; // empty when the schema does not require a response
  std::vector<std::string> covariate_names;

  std::size_t size() const { return static_cast<std::size_t>(t.size()); }
};

inline Dataset dataset_from_csv(const CsvTable &table, const DatasetSchema &schema = {}) {
  std::vector<std::string> names = schema.covariates;
  if (names.empty()) {
    for (const std::string &h : table.header) {
      if (h.rfind("x_", 0) == 0) {
        names.push_back(h);
      }
    }
    if (names.empty()) {
      throw MissingColumn("no covariate columns (expected names starting with 'x_')");
    }
  }
  std::vector<std::string> used = names;
  used.push_back(schema.treatment);
  if (schema.require_response) {
    used.push_back(schema.response);
  }
  for (std::size_t a = 0; a < used.size(); ++a) {
    for (std::size_t b = a + 1; b < used.size(); ++b) {
      if (used[a] == used[b]) {
        throw InvalidArgument("column '" + used[a] + "' is assigned two roles");
      }
    }
  }
  Dataset d;
  d.covariate_names = names;
  d.t = table.numeric_column(schema.treatment);
  if (schema.require_response) {
    d.y = table.numeric_column(schema.response);
  }
  d.x.resize(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    d.x.col(static_cast<Eigen::Index>(j)) = table.numeric_column(names[j]);
  }
  return d;
}

inline Dataset read_dataset(const std::string &path, const DatasetSchema &schema = {}) {
  return dataset_from_csv(read_csv(path), schema);
}

/// unit_index, x_1..x_d, t, y, pi_true, mu_true, effect_true.
inline std::string simulated_dataset_csv(const SimulatedDataset &d) {
  std::vector<std::string> header = {"unit_index"};
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    header.push_back("x_" + std::to_string(j + 1));
  }
  for (const char *c : {"t", "y", "pi_true", "mu_true", "effect_true"}) {
    header.emplace_back(c);
  }
  std::string out = join_csv(header);
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    std::vector<std::string> cells = {std::to_string(i)};
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
      cells.push_back(format_double(d.x(i, j)));
    }
    for (double v : {d.t[i], d.y[i], d.pi_true[i], d.mu_true[i], d.effect_true[i]}) {
      cells.push_back(format_double(v));
    }
    out += join_csv(cells);
  }
  return out;
}

/// Tagged IHDP covariates from a CSV with columns named birthweight, gender,
/// neonatal and cdc_days plus any further covariates. Columns whose values
/// are all 0/1 are treated as binary.
inline CovariateTable covariate_table_from_csv(const CsvTable &csv) {
  CovariateTable table;
  table.values.resize(static_cast<Eigen::Index>(csv.size()), static_cast<Eigen::Index>(csv.header.size()));
  for (std::size_t j = 0; j < csv.header.size(); ++j) {
    const std::string &name = csv.header[j];
    if (name == "unit_index") {
      continue;
    }
    const Eigen::VectorXd col = csv.numeric_column(name);
    ColumnTag tag;
    tag.name = name;
    tag.kind = (col.array() == 0.0 || col.array() == 1.0).all() ? ColumnKind::Binary : ColumnKind::Continuous;
    if (name == "birthweight") {
      tag.role = ColumnRole::Birthweight;
    } else if (name == "gender") {
      tag.role = ColumnRole::Gender;
    } else if (name == "neonatal") {
      tag.role = ColumnRole::Neonatal;
    } else if (name == "cdc_days") {
      tag.role = ColumnRole::Dosage;
    }
    table.values.col(static_cast<Eigen::Index>(table.columns.size())) = col;
    table.columns.push_back(tag);
  }
  table.values.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(table.columns.size()));
  table.validate();
  return table;
}

// ---------------------------------------------------------------------------
// Propensity and posterior files
// ---------------------------------------------------------------------------

inline std::string ps_csv(std::span<const PropensityEstimate> ps) {
  std::string out = join_csv({"unit_index", "ps_mean", "ps_var", "fold"});
  for (const PropensityEstimate &e : ps) {
    out += join_csv({std::to_string(e.unit_index), format_double(e.mean), format_double(e.variance),
                     std::to_string(e.fold)});
  }
  return out;
}

inline std::vector<PropensityEstimate> ps_from_csv(const CsvTable &table) {
  const Eigen::VectorXd idx = table.numeric_column("unit_index");
  const Eigen::VectorXd mean = table.numeric_column("ps_mean");
  const Eigen::VectorXd var = table.numeric_column("ps_var");
  const bool has_fold = table.has_column("fold");
  const Eigen::VectorXd fold = has_fold ? table.numeric_column("fold") : Eigen::VectorXd::Zero(idx.size());
  std::vector<PropensityEstimate> out(table.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Eigen::Index k = static_cast<Eigen::Index>(i);
    if (idx[k] < 0.0 || idx[k] != std::floor(idx[k])) {
      throw InvalidArgument("ps file: unit_index must be a nonnegative integer at row " + std::to_string(i + 1));
    }
    if (var[k] < 0.0) {
      throw NegativeValue("ps file: negative ps_var at row " + std::to_string(i + 1));
    }
    out[i] = PropensityEstimate{static_cast<std::size_t>(idx[k]), mean[k], var[k], static_cast<int>(fold[k])};
  }
  return out;
}

/// unit_index, t, adrf_mean, adrf_sd, lo90, hi90.
inline std::string posterior_csv(const Eigen::VectorXd &doses, const GaussianPosterior &post,
                                 const CredibleIntervals &ci) {
  std::string out = join_csv({"unit_index", "t", "adrf_mean", "adrf_sd", "lo90", "hi90"});
  for (Eigen::Index i = 0; i < doses.size(); ++i) {
    out += join_csv({std::to_string(i), format_double(doses[i]), format_double(post.means[i]),
                     format_double(post.per_point_sd[i]), format_double(ci.lower[i]), format_double(ci.upper[i])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Response fits
// ---------------------------------------------------------------------------

inline Json params_json(const KernelParams &p) {
  Json j;
  j["gamma_sq"] = p.gamma_sq;
  j["omega_sq"] = p.omega_sq;
  j["lengthscales"] = std::vector<double>(p.lengthscales.data(), p.lengthscales.data() + p.lengthscales.size());
  j["rho"] = p.rho;
  j["symg_a"] = p.symg_a;
  j["noise_var"] = p.noise_var;
  return j;
}

inline KernelParams params_from_json(const Json &j) {
  KernelParams p;
  p.gamma_sq = j.at("gamma_sq").get<double>();
  p.omega_sq = j.at("omega_sq").get<double>();
  const std::vector<double> l = j.at("lengthscales").get<std::vector<double>>();
  p.lengthscales = Eigen::Map<const Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size()));
  p.rho = j.at("rho").get<double>();
  p.symg_a = j.at("symg_a").get<double>();
  p.noise_var = j.at("noise_var").get<double>();
  return p;
}

/// Fit report: final and initial parameters, a trace summary, the seed and
/// the training rows with centered targets (y minus y_offset).
inline Json fit_report_json(const ResponseFit &fit) {
  Json j;
  j["kernel"] = std::string(to_string(fit.variant.tag));
  j["seed"] = fit.seed;
  j["params"] = params_json(fit.params);
  j["initial_params"] = params_json(fit.initial_params);
  Json trace;
  trace["epochs"] = fit.trace.empty() ? 0 : fit.trace.size() - 1;
  trace["initial_objective"] = fit.trace.empty() ? 0.0 : fit.trace.front();
  trace["final_objective"] = fit.final_objective();
  trace["trailing_relative_change_100"] = trailing_relative_change(fit.trace, 100);
  j["trace"] = trace;
  j["y_offset"] = fit.y_offset;
  Json rows = Json::array();
  const std::vector<ThetaRow> &train = fit.gp.train_inputs;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const ThetaRow &r = train[i];
    Json row;
    row["ps_mean"] = r.ps_mean;
    row["ps_var"] = r.ps_var;
    row["covariates"] = std::vector<double>(r.covariates.data(), r.covariates.data() + r.covariates.size());
    row["t"] = r.treatment;
    row["centered_y"] = fit.gp.train_targets[static_cast<Eigen::Index>(i)];
    rows.push_back(row);
  }
  j["training_rows"] = rows;
  return j;
}

/// Rebuilds the fitted GP of a fit report without re-optimizing; bitwise
/// equal to the original fit's GP because centered targets are stored.
inline ResponseFit response_fit_from_json(const Json &j) {
  ResponseFit fit;
  fit.variant = KernelVariant{parse_kernel_tag(j.at("kernel").get<std::string>())};
  fit.seed = j.at("seed").get<std::uint64_t>();
  fit.params = params_from_json(j.at("params"));
  fit.initial_params = params_from_json(j.at("initial_params"));
  fit.y_offset = j.at("y_offset").get<double>();
  std::vector<ThetaRow> rows;
  std::vector<double> centered;
  for (const Json &row : j.at("training_rows")) {
    ThetaRow r;
    r.ps_mean = row.at("ps_mean").get<double>();
    r.ps_var = row.at("ps_var").get<double>();
    const std::vector<double> c = row.at("covariates").get<std::vector<double>>();
    r.covariates = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    r.treatment = row.at("t").get<double>();
    rows.push_back(std::move(r));
    centered.push_back(row.at("centered_y").get<double>());
  }
  const Eigen::VectorXd targets = Eigen::Map<const Eigen::VectorXd>(centered.data(), static_cast<Eigen::Index>(centered.size()));
  const Eigen::VectorXd floors = fit.variant.rest_form() == RestForm::Symg ? symg_variance_floors(fit.variant, rows)
                                                                           : Eigen::VectorXd{};
  fit.gp = fit_exact_gp(std::move(rows), targets, VariantKernel{fit.variant, fit.params, floors}, fit.params.noise_var);
  const Json &trace = j.at("trace");
  fit.trace = {trace.at("initial_objective").get<double>(), trace.at("final_objective").get<double>()};
  return fit;
}

// ---------------------------------------------------------------------------
// Scenarios and results
// ---------------------------------------------------------------------------

/// Scenario JSON. Every key is optional except "dgp"; unknown keys are
/// rejected so typos fail loudly.
inline ScenarioSpec scenario_from_json(const Json &j) {
  static const std::vector<std::string> known = {
      "name", "dgp", "n", "mu", "effect", "pi_formula", "surface", "covariates", "methods", "seeds", "replications",
      "base_seed", "epochs", "learning_rate", "propensity", "posterior_samples", "n_bootstrap", "oracle_population",
      "adrf_target", "adrf_mode", "threads"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw InvalidArgument("scenario: unknown key '" + it.key() + "'");
    }
  }
  ScenarioSpec s;
  s.name = j.value("name", s.name);
  s.dgp = parse_dgp_kind(j.at("dgp").get<std::string>());
  const std::size_t n = j.value("n", std::size_t{250});
  s.full.n = n;
  s.ihdp_n = n;
  if (j.contains("mu")) {
    s.full.mu = parse_mu_variant(j.at("mu").get<std::string>());
  }
  if (j.contains("effect")) {
    s.full.effect = parse_effect_variant(j.at("effect").get<std::string>());
    s.ihdp.effect = s.full.effect;
  }
  if (j.contains("pi_formula")) {
    s.full.pi_formula = parse_pi_formula(j.at("pi_formula").get<std::string>());
  }
  if (j.contains("surface")) {
    s.ihdp.surface = parse_surface(j.at("surface").get<std::string>());
  }
  if (j.contains("covariates")) {
    s.covariates = covariate_table_from_csv(read_csv(j.at("covariates").get<std::string>()));
  }
  if (j.contains("methods")) {
    s.methods = j.at("methods").get<std::vector<std::string>>();
  }
  if (j.contains("seeds")) {
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else if (j.contains("replications")) {
    const std::size_t reps = j.at("replications").get<std::size_t>();
    const std::uint64_t base = j.value("base_seed", std::uint64_t{1});
    s.seeds.clear();
    for (std::size_t r = 0; r < reps; ++r) {
      s.seeds.push_back(base + r);
    }
  }
  s.epochs = j.value("epochs", s.epochs);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  if (j.contains("propensity")) {
    const Json &p = j.at("propensity");
    if (p.contains("kernel")) {
      s.propensity.kernel_family = parse_vector_kernel_family(p.at("kernel").get<std::string>());
    }
    s.propensity.epochs = p.value("epochs", s.propensity.epochs);
    s.propensity.learning_rate = p.value("learning_rate", s.propensity.learning_rate);
    if (p.contains("variance")) {
      const std::string v = p.at("variance").get<std::string>();
      if (v != "epistemic" && v != "predictive") {
        throw InvalidArgument("scenario: propensity variance must be epistemic or predictive");
      }
      s.propensity.variance_mode = v == "epistemic" ? PsVarianceMode::Epistemic : PsVarianceMode::Predictive;
    }
  }
  s.posterior_samples = j.value("posterior_samples", s.posterior_samples);
  s.n_bootstrap = j.value("n_bootstrap", s.n_bootstrap);
  s.oracle_population = j.value("oracle_population", s.oracle_population);
  if (j.contains("adrf_target")) {
    s.target = parse_adrf_target(j.at("adrf_target").get<std::string>());
  }
  if (j.contains("adrf_mode")) {
    s.mode = parse_adrf_mode(j.at("adrf_mode").get<std::string>());
  }
  s.threads = j.value("threads", s.threads);
  s.validate();
  return s;
}

inline ScenarioSpec read_scenario(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("cannot open '" + path + "'");
  }
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw InvalidArgument(path + ": " + e.what());
  }
  return scenario_from_json(j);
}

inline const std::vector<std::string> &results_header() {
  static const std::vector<std::string> h = {"scenario", "method", "seed",  "cov90",      "i90",    "bias",
                                             "rmse",     "n_units", "n_samples", "convergence", "error"};
  return h;
}

/// One line per record; aggregate rows carry seed "mean".
inline std::string results_csv(const std::vector<MetricsRecord> &records) {
  std::string out = join_csv(results_header());
  for (const MetricsRecord &r : records) {
    out += join_csv({r.scenario, r.method, r.aggregate ? std::string("mean") : std::to_string(r.seed),
                     format_double(r.cov90), format_double(r.i90), format_double(r.bias), format_double(r.rmse),
                     std::to_string(r.n_units), std::to_string(r.n_samples), format_double(r.convergence), r.error});
  }
  return out;
}

inline Json number_or_null(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

inline Json results_json(const ScenarioSpec &spec, const std::vector<MetricsRecord> &records) {
  Json j;
  j["scenario"] = spec.name;
  j["dgp"] = std::string(to_string(spec.dgp));
  j["adrf_mode"] = std::string(to_string(spec.mode));
  j["adrf_target"] = std::string(to_string(spec.target));
  j["epochs"] = spec.epochs;
  j["seeds"] = spec.seeds;
  Json recs = Json::array();
  for (const MetricsRecord &r : records) {
    Json x;
    x["method"] = r.method;
    x["seed"] = r.aggregate ? Json("mean") : Json(r.seed);
    x["replications"] = r.replications;
    x["cov90"] = number_or_null(r.cov90);
    x["i90"] = number_or_null(r.i90);
    x["bias"] = number_or_null(r.bias);
    x["rmse"] = number_or_null(r.rmse);
    x["n_units"] = r.n_units;
    x["n_samples"] = r.n_samples;
    x["convergence"] = number_or_null(r.convergence);
    x["error"] = r.error.empty() ? Json(nullptr) : Json(r.error);
    recs.push_back(x);
  }
  j["records"] = recs;
  return j;
}

} // namespace drgp

#endif // DRGP_IO_HPP
