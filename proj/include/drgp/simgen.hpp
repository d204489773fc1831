#ifndef DRGP_SIMGEN_HPP
#define DRGP_SIMGEN_HPP

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/random.hpp"

namespace drgp {

enum class MuVariant { Linear, Nonlinear };
enum class EffectVariant { Homogeneous, Heterogeneous };
enum class Surface { A, B, C };

/// How the full-simulation PS is parenthesized: as printed,
/// 0.8 Phi((3 mu - x1)/s - x1/2), or the ancestor form 0.8 Phi(3 mu/s - x1/2).
enum class PiFormula { AsWritten, Ancestor };

/// Conditional weights the potential-outcome mean by the dosage density at t;
/// marginal averages it uniformly over the population.
enum class AdrfTarget { Conditional, Marginal };

inline std::string_view to_string(MuVariant v) { return v == MuVariant::Linear ? "linear" : "nonlinear"; }
inline std::string_view to_string(EffectVariant v) {
  return v == EffectVariant::Homogeneous ? "homogeneous" : "heterogeneous";
}
inline std::string_view to_string(Surface s) {
  return s == Surface::A ? "A" : s == Surface::B ? "B" : "C";
}
inline std::string_view to_string(PiFormula f) { return f == PiFormula::AsWritten ? "as-written" : "ancestor"; }
inline std::string_view to_string(AdrfTarget t) { return t == AdrfTarget::Conditional ? "conditional" : "marginal"; }

inline MuVariant parse_mu_variant(std::string_view s) {
  if (s == "linear") return MuVariant::Linear;
  if (s == "nonlinear") return MuVariant::Nonlinear;
  throw InvalidArgument("unknown mu variant '" + std::string(s) + "'; valid: linear, nonlinear");
}
inline EffectVariant parse_effect_variant(std::string_view s) {
  if (s == "homogeneous") return EffectVariant::Homogeneous;
  if (s == "heterogeneous") return EffectVariant::Heterogeneous;
  throw InvalidArgument("unknown effect variant '" + std::string(s) +
                        "'; valid: homogeneous, heterogeneous");
}
inline Surface parse_surface(std::string_view s) {
  if (s == "A" || s == "a") return Surface::A;
  if (s == "B" || s == "b") return Surface::B;
  if (s == "C" || s == "c") return Surface::C;
  throw InvalidArgument("unknown surface '" + std::string(s) + "'; valid: A, B, C");
}
inline PiFormula parse_pi_formula(std::string_view s) {
  if (s == "as-written") return PiFormula::AsWritten;
  if (s == "ancestor") return PiFormula::Ancestor;
  throw InvalidArgument("unknown pi formula '" + std::string(s) + "'; valid: as-written, ancestor");
}
inline AdrfTarget parse_adrf_target(std::string_view s) {
  if (s == "conditional") return AdrfTarget::Conditional;
  if (s == "marginal") return AdrfTarget::Marginal;
  throw InvalidArgument("unknown ADRF target '" + std::string(s) + "'; valid: conditional, marginal");
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct SimulatedDataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd t;
  Eigen::VectorXd y;
  Eigen::VectorXd pi_true;
  Eigen::VectorXd mu_true;
  Eigen::VectorXd effect_true;
  std::vector<std::string> covariate_names;
  std::string dgp_id;
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(t.size()); }
};

/// Monte-Carlo ADRF over a fixed covariate population: each member j has a
/// baseline mu_j, effect multiplier e_j and dosage mean pi_j; the potential
/// outcome at dose t is mu_j + t e_j.
class AdrfOracle {
public:
  AdrfOracle() = default;
  AdrfOracle(Eigen::VectorXd mu, Eigen::VectorXd effect, Eigen::VectorXd pi, AdrfTarget target,
             double dosage_sd = 1.0)
      : mu_(std::move(mu)), effect_(std::move(effect)), pi_(std::move(pi)), target_(target),
        dosage_sd_(dosage_sd) {
    require_same_size(static_cast<std::size_t>(mu_.size()), static_cast<std::size_t>(effect_.size()),
                      "AdrfOracle");
    require_same_size(static_cast<std::size_t>(mu_.size()), static_cast<std::size_t>(pi_.size()),
                      "AdrfOracle");
    if (mu_.size() == 0) {
      throw InvalidArgument("AdrfOracle: empty population");
    }
  }

  struct Estimate {
    double value = 0.0;
    double standard_error = 0.0;
  };

  Estimate estimate(double t) const {
    const Eigen::Index n = mu_.size();
    Eigen::ArrayXd m = mu_.array() + t * effect_.array();
    Eigen::ArrayXd w;
    if (target_ == AdrfTarget::Conditional) {
      w = ((t - pi_.array()) / dosage_sd_).unaryExpr([](double z) { return normal_pdf(z); });
      if ((w < 1e-300).all()) {
        throw DegenerateWeights("true_adrf: all dosage weights vanish at t = " + std::to_string(t));
      }
    } else {
      w = Eigen::ArrayXd::Ones(n);
    }
    const double wsum = w.sum();
    Estimate out;
    out.value = (w * m).sum() / wsum;
    out.standard_error = std::sqrt((w.square() * (m - out.value).square()).sum()) / wsum;
    return out;
  }

  double operator()(double t) const { return estimate(t).value; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd &t) const {
    Eigen::VectorXd out(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      out[i] = (*this)(t[i]);
    }
    return out;
  }

  AdrfTarget target() const { return target_; }
  std::size_t population_size() const { return static_cast<std::size_t>(mu_.size()); }
  const Eigen::VectorXd &mu() const { return mu_; }
  const Eigen::VectorXd &effect() const { return effect_; }
  const Eigen::VectorXd &pi() const { return pi_; }

private:
  Eigen::VectorXd mu_;
  Eigen::VectorXd effect_;
  Eigen::VectorXd pi_;
  AdrfTarget target_ = AdrfTarget::Conditional;
  double dosage_sd_ = 1.0;
};

// ---------------------------------------------------------------------------
// Full simulation (continuous-dosage adaptation of the RIC simulation)
// ---------------------------------------------------------------------------

struct FullSimConfig {
  std::size_t n = 250;
  MuVariant mu = MuVariant::Nonlinear;
  EffectVariant effect = EffectVariant::Homogeneous;
  PiFormula pi_formula = PiFormula::AsWritten;
};

/// g(1) = 2, g(2) = -1, g(3) = -4.
inline double full_sim_g(int category) {
  switch (category) {
  case 1: return 2.0;
  case 2: return -1.0;
  case 3: return -4.0;
  default: throw InvalidArgument("full_sim_g: category must be 1, 2 or 3");
  }
}

/// Covariate row (x1, x2, x3, x4, x5).
using FullSimCovariates = std::array<double, 5>;

inline FullSimCovariates draw_full_sim_covariates(Rng &rng) {
  FullSimCovariates x{};
  x[0] = standard_normal(rng);
  x[1] = standard_normal(rng);
  x[2] = standard_normal(rng);
  x[3] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  const double u = uniform01(rng);
  x[4] = u < 0.1 ? 1.0 : (u < 0.5 ? 2.0 : 3.0);
  return x;
}

inline double full_sim_mu(const FullSimCovariates &x, MuVariant variant) {
  const double g = full_sim_g(static_cast<int>(x[4]));
  return variant == MuVariant::Linear ? 1.0 + g + x[0] * x[2] : 1.0 + g + 6.0 * std::abs(x[2] - 1.0);
}

inline double full_sim_effect(const FullSimCovariates &x, EffectVariant variant) {
  return variant == EffectVariant::Homogeneous ? 3.0 : 1.0 + 2.0 * x[1] * x[3];
}

/// Dosage mean; `s` is the frozen SD of mu over the generated sample.
inline double full_sim_pi(double mu, double x1, double s, double u, PiFormula formula) {
  const double arg = formula == PiFormula::AsWritten ? (3.0 * mu - x1) / s - x1 / 2.0
                                                     : 3.0 * mu / s - x1 / 2.0;
  return 0.8 * normal_cdf(arg) + u / 10.0;
}

struct FullSimulation {
  SimulatedDataset data;
  FullSimConfig config;
  double mu_sd = 0.0; // s, frozen
};

inline FullSimulation gen_full_sim(const FullSimConfig &config, std::uint64_t seed) {
  if (config.n < 10) {
    throw TooFewUnits("gen_full_sim: n must be at least 10");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(config.n);
  Rng rng(seed);
  FullSimulation sim;
  sim.config = config;
  SimulatedDataset &d = sim.data;
  d.x.resize(n, 5);
  d.mu_true.resize(n);
  d.effect_true.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const FullSimCovariates x = draw_full_sim_covariates(rng);
    for (int j = 0; j < 5; ++j) {
      d.x(i, j) = x[static_cast<std::size_t>(j)];
    }
    d.mu_true[i] = full_sim_mu(x, config.mu);
    d.effect_true[i] = full_sim_effect(x, config.effect);
  }
  const double mean_mu = d.mu_true.mean();
  sim.mu_sd = std::sqrt((d.mu_true.array() - mean_mu).square().sum() / static_cast<double>(n - 1));
  if (!(sim.mu_sd > 0.0)) {
    throw DegenerateTargets("gen_full_sim: mu has zero spread");
  }
  d.pi_true.resize(n);
  d.t.resize(n);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    d.pi_true[i] = full_sim_pi(d.mu_true[i], d.x(i, 0), sim.mu_sd, u, config.pi_formula);
    d.t[i] = d.pi_true[i] + standard_normal(rng);
    d.y[i] = d.mu_true[i] + d.t[i] * d.effect_true[i];
  }
  d.covariate_names = {"x_1", "x_2", "x_3", "x_4", "x_5"};
  d.dgp_id = "full/" + std::string(to_string(config.mu)) + "/" + std::string(to_string(config.effect)) +
             "/n" + std::to_string(config.n);
  d.seed = seed;
  return sim;
}

inline constexpr std::size_t default_oracle_population = 100000;

/// Oracle over a fresh population of `n_mc` covariate draws, with the sample's
/// frozen `mu_sd`.
inline AdrfOracle full_sim_oracle(const FullSimConfig &config, double mu_sd, std::uint64_t oracle_seed,
                                  std::size_t n_mc = default_oracle_population,
                                  AdrfTarget target = AdrfTarget::Conditional) {
  if (n_mc == 0) {
    throw InvalidArgument("full_sim_oracle: empty population");
  }
  Rng rng(oracle_seed);
  const Eigen::Index n = static_cast<Eigen::Index>(n_mc);
  Eigen::VectorXd mu(n), effect(n), pi(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const FullSimCovariates x = draw_full_sim_covariates(rng);
    mu[j] = full_sim_mu(x, config.mu);
    effect[j] = full_sim_effect(x, config.effect);
    pi[j] = full_sim_pi(mu[j], x[0], mu_sd, uniform01(rng), config.pi_formula);
  }
  return AdrfOracle(std::move(mu), std::move(effect), std::move(pi), target, 1.0);
}

inline double true_adrf(const FullSimulation &sim, double t, std::uint64_t oracle_seed,
                        std::size_t n_mc = default_oracle_population,
                        AdrfTarget target = AdrfTarget::Conditional) {
  return full_sim_oracle(sim.config, sim.mu_sd, oracle_seed, n_mc, target)(t);
}

// ---------------------------------------------------------------------------
// IHDP-style semi-synthetic simulation
// ---------------------------------------------------------------------------

enum class ColumnKind { Continuous, Binary };
enum class ColumnRole { Covariate, Birthweight, Gender, Neonatal, Dosage };

struct ColumnTag {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  ColumnRole role = ColumnRole::Covariate;
};

/// Covariates with per-column type and role tags. Exactly one column carries
/// each of the birthweight, gender, neonatal and dosage roles.
struct CovariateTable {
  Eigen::MatrixXd values;
  std::vector<ColumnTag> columns;

  Eigen::Index rows() const { return values.rows(); }

  Eigen::Index index_of(ColumnRole role) const {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j].role == role) {
        return static_cast<Eigen::Index>(j);
      }
    }
    static constexpr const char *names[] = {"covariate", "birthweight", "gender", "neonatal", "dosage"};
    throw MissingTaggedColumn(std::string("covariate table has no ") + names[static_cast<int>(role)] +
                              " column");
  }

  /// Every non-dosage column, in table order.
  std::vector<Eigen::Index> covariate_columns() const {
    std::vector<Eigen::Index> out;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j].role != ColumnRole::Dosage) {
        out.push_back(static_cast<Eigen::Index>(j));
      }
    }
    return out;
  }

  void validate() const {
    require_same_size(columns.size(), static_cast<std::size_t>(values.cols()), "CovariateTable");
    for (ColumnRole role : {ColumnRole::Birthweight, ColumnRole::Gender, ColumnRole::Neonatal, ColumnRole::Dosage}) {
      (void)index_of(role);
    }
    const Eigen::Index dose = index_of(ColumnRole::Dosage);
    if ((values.col(dose).array() < 0.0).any()) {
      throw InvalidArgument("CovariateTable: dosage column must be nonnegative");
    }
  }
};

/// Stand-in for the restricted study covariates: standardized birthweight,
/// gender, standardized neonatal-health composite, three Bernoulli(0.3/0.5/0.7)
/// and three standard-normal auxiliaries, and CDC days = max(1, round|N(180, 60)|).
inline CovariateTable gen_synthetic_covariates(std::size_t n, std::uint64_t seed) {
  if (n < 10) {
    throw TooFewUnits("gen_synthetic_covariates: n must be at least 10");
  }
  CovariateTable table;
  table.columns = {
      {"birthweight", ColumnKind::Continuous, ColumnRole::Birthweight},
      {"gender", ColumnKind::Binary, ColumnRole::Gender},
      {"neonatal", ColumnKind::Continuous, ColumnRole::Neonatal},
      {"aux_bin_1", ColumnKind::Binary, ColumnRole::Covariate},
      {"aux_bin_2", ColumnKind::Binary, ColumnRole::Covariate},
      {"aux_bin_3", ColumnKind::Binary, ColumnRole::Covariate},
      {"aux_cont_1", ColumnKind::Continuous, ColumnRole::Covariate},
      {"aux_cont_2", ColumnKind::Continuous, ColumnRole::Covariate},
      {"aux_cont_3", ColumnKind::Continuous, ColumnRole::Covariate},
      {"cdc_days", ColumnKind::Continuous, ColumnRole::Dosage},
  };
  const Eigen::Index rows = static_cast<Eigen::Index>(n);
  table.values.resize(rows, 10);
  Rng rng(seed);
  constexpr std::array<double, 3> aux_p = {0.3, 0.5, 0.7};
  for (Eigen::Index i = 0; i < rows; ++i) {
    table.values(i, 0) = standard_normal(rng);
    table.values(i, 1) = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    table.values(i, 2) = standard_normal(rng);
    for (int k = 0; k < 3; ++k) {
      table.values(i, 3 + k) = uniform01(rng) < aux_p[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    }
    for (int k = 0; k < 3; ++k) {
      table.values(i, 6 + k) = standard_normal(rng);
    }
    const double days = std::round(std::abs(180.0 + 60.0 * standard_normal(rng)));
    table.values(i, 9) = std::max(1.0, days);
  }
  return table;
}

struct IhdpConfig {
  Surface surface = Surface::A;
  EffectVariant effect = EffectVariant::Homogeneous;
};

/// Sampled surface coefficients over the surface's feature map, plus the
/// additive offset (4 for A, -omega_B for B, +omega_C for C).
struct IhdpCoefficients {
  Surface surface = Surface::A;
  std::vector<std::string> feature_names;
  Eigen::VectorXd beta;
  double offset = 0.0;
};

/// Features of the response surface: the covariates themselves (A, B) or, for
/// C, the covariates plus squared continuous terms plus all pairwise products.
inline Eigen::MatrixXd ihdp_features(const CovariateTable &table, Surface surface,
                                     std::vector<std::string> *names = nullptr) {
  const std::vector<Eigen::Index> cov = table.covariate_columns();
  std::vector<Eigen::VectorXd> cols;
  std::vector<std::string> labels;
  for (Eigen::Index c : cov) {
    cols.push_back(table.values.col(c));
    labels.push_back(table.columns[static_cast<std::size_t>(c)].name);
  }
  if (surface == Surface::C) {
    for (Eigen::Index c : cov) {
      if (table.columns[static_cast<std::size_t>(c)].kind == ColumnKind::Continuous) {
        cols.push_back(table.values.col(c).array().square());
        labels.push_back(table.columns[static_cast<std::size_t>(c)].name + "^2");
      }
    }
    for (std::size_t a = 0; a < cov.size(); ++a) {
      for (std::size_t b = a + 1; b < cov.size(); ++b) {
        cols.push_back(table.values.col(cov[a]).cwiseProduct(table.values.col(cov[b])));
        labels.push_back(table.columns[static_cast<std::size_t>(cov[a])].name + "*" +
                         table.columns[static_cast<std::size_t>(cov[b])].name);
      }
    }
  }
  Eigen::MatrixXd out(table.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = cols[j];
  }
  if (names) {
    *names = std::move(labels);
  }
  return out;
}

namespace detail {

template <std::size_t K>
std::size_t draw_category(Rng &rng, const std::array<double, K> &probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    acc += probs[k];
    if (u < acc) {
      return k;
    }
  }
  return K - 1;
}

inline Eigen::VectorXd ihdp_effect(const CovariateTable &table, EffectVariant variant) {
  if (variant == EffectVariant::Homogeneous) {
    return Eigen::VectorXd::Constant(table.rows(), 3.0);
  }
  const Eigen::ArrayXd x1 = table.values.col(table.index_of(ColumnRole::Birthweight)).array();
  const Eigen::ArrayXd x2 = table.values.col(table.index_of(ColumnRole::Gender)).array();
  const Eigen::ArrayXd x3 = table.values.col(table.index_of(ColumnRole::Neonatal)).array();
  return (1.0 + x1 * x2 / 3.0 + x1 * (1.0 - x2) / 2.0 + 2.0 * x3).matrix();
}

} // namespace detail

inline IhdpCoefficients sample_ihdp_coefficients(const CovariateTable &table, Surface surface, Rng &rng) {
  IhdpCoefficients coef;
  coef.surface = surface;
  const Eigen::MatrixXd features = ihdp_features(table, surface, &coef.feature_names);
  coef.beta.resize(features.cols());
  if (surface == Surface::C) {
    constexpr std::array<double, 3> probs = {0.6, 0.3, 0.1};
    constexpr std::array<double, 3> values = {0.0, 2.5, 5.0};
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      coef.beta[j] = values[detail::draw_category(rng, probs)];
    }
    return coef;
  }
  const std::vector<Eigen::Index> cov = table.covariate_columns();
  constexpr std::array<double, 5> probs_a = {0.5, 0.2, 0.15, 0.1, 0.05};
  constexpr std::array<double, 5> probs_cont = {0.5, 0.125, 0.125, 0.125, 0.125};
  constexpr std::array<double, 5> probs_bin = {0.6, 0.1, 0.1, 0.1, 0.1};
  for (std::size_t j = 0; j < cov.size(); ++j) {
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    if (surface == Surface::A) {
      coef.beta[jj] = static_cast<double>(detail::draw_category(rng, probs_a));
    } else {
      const bool binary = table.columns[static_cast<std::size_t>(cov[j])].kind == ColumnKind::Binary;
      const std::size_t k = binary ? detail::draw_category(rng, probs_bin) : detail::draw_category(rng, probs_cont);
      coef.beta[jj] = static_cast<double>(k) / 10.0;
    }
  }
  return coef;
}

struct IhdpSimulation {
  SimulatedDataset data;
  IhdpConfig config;
  IhdpCoefficients coefficients;
  AdrfOracle oracle;
};

/// Semi-synthetic response over tagged covariates; the dosage column is the
/// treatment. `population` (defaults to `table`) is the covariate population
/// used for the B/C offsets and the ADRF oracle.
inline IhdpSimulation gen_ihdp_sim(const CovariateTable &table, const IhdpConfig &config, std::uint64_t seed,
                                   const CovariateTable *population = nullptr) {
  table.validate();
  const CovariateTable &pop = population ? *population : table;
  pop.validate();
  if (pop.covariate_columns().size() != table.covariate_columns().size()) {
    throw DimensionMismatch("gen_ihdp_sim: population has different covariates");
  }
  Rng rng(seed);
  IhdpSimulation sim;
  sim.config = config;
  sim.coefficients = sample_ihdp_coefficients(table, config.surface, rng);
  IhdpCoefficients &coef = sim.coefficients;

  const Eigen::VectorXd pop_base = ihdp_features(pop, config.surface) * coef.beta;
  const Eigen::VectorXd pop_effect = detail::ihdp_effect(pop, config.effect);
  const Eigen::VectorXd pop_dose = pop.values.col(pop.index_of(ColumnRole::Dosage));
  const double mean_dosage_effect = pop_effect.cwiseProduct(pop_dose).mean();
  switch (config.surface) {
  case Surface::A: coef.offset = 4.0; break;
  case Surface::B: coef.offset = -(pop_base.mean() + mean_dosage_effect); break;       // E[y] = 0
  case Surface::C: coef.offset = 10.0 - (pop_base.mean() + mean_dosage_effect); break; // E[y] = 10
  }

  SimulatedDataset &d = sim.data;
  const Eigen::Index n = table.rows();
  const std::vector<Eigen::Index> cov = table.covariate_columns();
  d.x.resize(n, static_cast<Eigen::Index>(cov.size()));
  for (std::size_t j = 0; j < cov.size(); ++j) {
    d.x.col(static_cast<Eigen::Index>(j)) = table.values.col(cov[j]);
    d.covariate_names.push_back(table.columns[static_cast<std::size_t>(cov[j])].name);
  }
  d.t = table.values.col(table.index_of(ColumnRole::Dosage));
  d.mu_true = (ihdp_features(table, config.surface) * coef.beta).array() + coef.offset;
  d.effect_true = detail::ihdp_effect(table, config.effect);
  d.pi_true = Eigen::VectorXd::Constant(n, pop_dose.mean());
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.y[i] = d.mu_true[i] + d.effect_true[i] * d.t[i] + standard_normal(rng);
  }
  d.dgp_id = "ihdp/" + std::string(to_string(config.surface)) + "/" + std::string(to_string(config.effect)) +
             "/n" + std::to_string(n);
  d.seed = seed;

  // Dosage is exogenous in this design, so conditional and marginal ADRFs
  // coincide; the oracle averages uniformly.
  sim.oracle = AdrfOracle(pop_base.array() + coef.offset, pop_effect,
                          Eigen::VectorXd::Constant(pop.rows(), pop_dose.mean()), AdrfTarget::Marginal);
  return sim;
}

} // namespace drgp

#endif // DRGP_SIMGEN_HPP
