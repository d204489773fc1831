#ifndef DRGP_EXPERIMENT_HPP
#define DRGP_EXPERIMENT_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/eval.hpp"
#include "drgp/pipeline.hpp"
#include "drgp/propensity.hpp"
#include "drgp/random.hpp"
#include "drgp/response.hpp"
#include "drgp/simgen.hpp"

namespace drgp {

enum class DgpKind { Full, Ihdp };

inline std::string_view to_string(DgpKind k) { return k == DgpKind::Full ? "full" : "ihdp"; }

inline DgpKind parse_dgp_kind(std::string_view s) {
  if (s == "full") {
    return DgpKind::Full;
  }
  if (s == "ihdp") {
    return DgpKind::Ihdp;
  }
  throw InvalidArgument("unknown dgp '" + std::string(s) + "' (valid: full, ihdp)");
}

/// Name of the Hirano-Imbens baseline in method lists.
inline constexpr std::string_view hi_method = "hi";

struct ScenarioSpec {
  std::string name = "scenario";
  DgpKind dgp = DgpKind::Full;
  FullSimConfig full;
  IhdpConfig ihdp;
  std::size_t ihdp_n = 250;                  // synthetic covariate rows
  std::optional<CovariateTable> covariates;  // user-supplied IHDP covariates
  std::vector<std::string> methods = {"a-prbf", "hi"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int epochs = 7000;
  double learning_rate = 0.0025;
  PropensityConfig propensity;
  std::size_t posterior_samples = 100;
  std::size_t n_bootstrap = 50;
  std::size_t oracle_population = default_oracle_population;
  AdrfTarget target = AdrfTarget::Conditional;
  AdrfMode mode = AdrfMode::Pointwise;
  unsigned threads = 1;

  void validate() const {
    if (methods.empty()) {
      throw InvalidArgument("scenario: no methods");
    }
    for (const std::string &m : methods) {
      if (m != hi_method) {
        (void)parse_kernel_tag(m);
      }
    }
    if (seeds.empty()) {
      throw InvalidArgument("scenario: no replication seeds");
    }
    if (epochs < 1 || !(learning_rate > 0.0)) {
      throw InvalidArgument("scenario: epochs and learning_rate must be positive");
    }
    if (posterior_samples < 1 || n_bootstrap < 1 || oracle_population < 1) {
      throw InvalidArgument("scenario: sample counts must be positive");
    }
  }
};

struct MetricsRecord {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  bool aggregate = false;
  std::size_t replications = 1; // successful replications behind an aggregate row
  double cov90 = std::numeric_limits<double>::quiet_NaN();
  double i90 = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_units = 0;
  std::size_t n_samples = 0;   // posterior samples or bootstrap resamples
  double convergence = std::numeric_limits<double>::quiet_NaN(); // trailing relative change (GP only)
  std::string error;           // empty on success

  bool ok() const { return error.empty(); }
};

/// One generated replication: data, the ADRF oracle and its values at the
/// observed doses.
struct Replication {
  SimulatedDataset data;
  AdrfOracle oracle;
  Eigen::VectorXd tau;
  double mu_sd = 0.0;                       // full simulation: frozen s
  std::optional<IhdpCoefficients> coefficients; // IHDP: sampled surface
};

/// Data and oracle for replication `seed`; streams are derived from the seed
/// as "data", "oracle" and "covariates".
inline Replication generate_replication(const ScenarioSpec &spec, std::uint64_t seed) {
  Replication rep;
  const std::uint64_t data_seed = derive_seed(seed, "data");
  const std::uint64_t oracle_seed = derive_seed(seed, "oracle");
  if (spec.dgp == DgpKind::Full) {
    FullSimulation sim = gen_full_sim(spec.full, data_seed);
    rep.oracle = full_sim_oracle(spec.full, sim.mu_sd, oracle_seed, spec.oracle_population, spec.target);
    rep.mu_sd = sim.mu_sd;
    rep.data = std::move(sim.data);
  } else {
    IhdpSimulation sim;
    if (spec.covariates) {
      sim = gen_ihdp_sim(*spec.covariates, spec.ihdp, data_seed);
    } else {
      const CovariateTable table = gen_synthetic_covariates(spec.ihdp_n, derive_seed(seed, "covariates"));
      const CovariateTable population = gen_synthetic_covariates(spec.oracle_population, oracle_seed);
      sim = gen_ihdp_sim(table, spec.ihdp, data_seed, &population);
    }
    rep.oracle = std::move(sim.oracle);
    rep.coefficients = std::move(sim.coefficients);
    rep.data = std::move(sim.data);
  }
  rep.tau = rep.oracle.evaluate(rep.data.t);
  return rep;
}

inline PropensityConfig replication_ps_config(const ScenarioSpec &spec, std::uint64_t seed) {
  PropensityConfig c = spec.propensity;
  c.seed = derive_seed(seed, "ps");
  return c;
}

inline ResponseOptions replication_response_options(const ScenarioSpec &spec, std::uint64_t seed,
                                                    std::string_view method) {
  ResponseOptions o;
  o.adam.epochs = spec.epochs;
  o.adam.learning_rate = spec.learning_rate;
  o.seed = derive_seed(seed, method);
  return o;
}

inline std::uint64_t posterior_sample_seed(std::uint64_t seed, std::string_view method) {
  return derive_seed(derive_seed(seed, method), "posterior");
}

/// Metrics of one GP fit against the truth at the training rows.
inline MetricsRecord evaluate_gp(const ResponseFit &fit, std::span<const ThetaRow> rows, const Eigen::VectorXd &tau,
                                 AdrfMode mode, std::size_t n_samples, std::uint64_t sample_seed) {
  MetricsRecord r;
  const GaussianPosterior post = adrf_posterior(fit, rows, mode);
  const CredibleIntervals ci = credible_interval(post, 0.90);
  r.cov90 = coverage_90(tau, ci.lower, ci.upper);
  r.i90 = interval_length_90(ci.lower, ci.upper);
  const BiasRmse br = bias_and_rmse(tau, sample_posterior(post, n_samples, sample_seed));
  r.bias = br.bias;
  r.rmse = br.rmse;
  r.n_units = rows.size();
  r.n_samples = n_samples;
  r.convergence = trailing_relative_change(fit.trace, 100);
  return r;
}

inline MetricsRecord evaluate_hi(const HiResult &hi, const Eigen::VectorXd &tau) {
  MetricsRecord r;
  r.cov90 = coverage_90(tau, hi.lower, hi.upper);
  r.i90 = interval_length_90(hi.lower, hi.upper);
  const BiasRmse br = bias_and_rmse(tau, hi.bootstrap);
  r.bias = br.bias;
  r.rmse = br.rmse;
  r.n_units = static_cast<std::size_t>(tau.size());
  r.n_samples = static_cast<std::size_t>(hi.bootstrap.rows());
  return r;
}

/// All method records for one replication; failures are recorded per cell.
inline std::vector<MetricsRecord> run_replication(const ScenarioSpec &spec, std::uint64_t seed) {
  std::vector<MetricsRecord> out(spec.methods.size());
  auto stamp = [&](MetricsRecord &r, const std::string &method) {
    r.method = method;
    r.scenario = spec.name;
    r.seed = seed;
  };
  std::optional<Replication> rep;
  std::string data_error;
  try {
    rep = generate_replication(spec, seed);
  } catch (const Error &e) {
    data_error = std::string(e.kind()) + ": " + e.what();
  }
  std::optional<std::vector<ThetaRow>> rows;
  std::string ps_error;
  for (std::size_t m = 0; m < spec.methods.size(); ++m) {
    const std::string &method = spec.methods[m];
    MetricsRecord &rec = out[m];
    try {
      if (!rep) {
        throw InternalConsistency("data generation failed: " + data_error);
      }
      const SimulatedDataset &d = rep->data;
      if (method == hi_method) {
        HiOptions opt;
        opt.n_bootstrap = spec.n_bootstrap;
        opt.seed = derive_seed(seed, "bootstrap");
        rec = evaluate_hi(hi_baseline(d.x, d.t, d.y, opt), rep->tau);
      } else {
        const KernelVariant variant{parse_kernel_tag(method)};
        if (!rows && ps_error.empty()) {
          try {
            const std::vector<PropensityEstimate> ps = cross_fitted_scores(d.x, d.t, replication_ps_config(spec, seed));
            rows = theta_rows(d.x, d.t, ps);
          } catch (const Error &e) {
            ps_error = std::string(e.kind()) + ": " + e.what();
          }
        }
        if (!rows) {
          throw InternalConsistency("propensity fit failed: " + ps_error);
        }
        const ResponseFit fit = fit_response(*rows, d.y, variant, replication_response_options(spec, seed, method));
        rec = evaluate_gp(fit, *rows, rep->tau, spec.mode, spec.posterior_samples, posterior_sample_seed(seed, method));
      }
    } catch (const Error &e) {
      rec = MetricsRecord{};
      rec.error = std::string(e.kind()) + ": " + e.what();
    }
    stamp(rec, method);
  }
  return out;
}

/// Mean of successful replications per method, in method order.
inline std::vector<MetricsRecord> aggregate_records(const ScenarioSpec &spec, const std::vector<MetricsRecord> &cells) {
  std::vector<MetricsRecord> out;
  for (const std::string &method : spec.methods) {
    MetricsRecord agg;
    agg.method = method;
    agg.scenario = spec.name;
    agg.aggregate = true;
    agg.replications = 0;
    double cov = 0.0, len = 0.0, bias = 0.0, rmse = 0.0, conv = 0.0;
    std::size_t conv_count = 0;
    for (const MetricsRecord &r : cells) {
      if (r.method != method || !r.ok()) {
        continue;
      }
      ++agg.replications;
      cov += r.cov90;
      len += r.i90;
      bias += r.bias;
      rmse += r.rmse;
      agg.n_units = r.n_units;
      agg.n_samples = r.n_samples;
      if (!std::isnan(r.convergence)) {
        conv = std::max(conv, r.convergence);
        ++conv_count;
      }
    }
    if (agg.replications == 0) {
      agg.error = "no successful replications";
    } else {
      const double k = static_cast<double>(agg.replications);
      agg.cov90 = cov / k;
      agg.i90 = len / k;
      agg.bias = bias / k;
      agg.rmse = rmse / k;
      if (conv_count > 0) {
        agg.convergence = conv; // worst case over replications
      }
    }
    out.push_back(std::move(agg));
  }
  return out;
}

/// Cell records ordered by (replication, method), followed by one aggregate
/// row per method. Replications may run on several threads; the output does
/// not depend on the thread count.
inline std::vector<MetricsRecord> run_experiment(const ScenarioSpec &spec) {
  spec.validate();
  const std::size_t reps = spec.seeds.size();
  std::vector<std::vector<MetricsRecord>> per_rep(reps);
  const unsigned workers = std::max(1U, std::min<unsigned>(spec.threads, static_cast<unsigned>(reps)));
  if (workers == 1) {
    for (std::size_t r = 0; r < reps; ++r) {
      per_rep[r] = run_replication(spec, spec.seeds[r]);
    }
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < reps; r += workers) {
          per_rep[r] = run_replication(spec, spec.seeds[r]);
        }
      });
    }
    for (std::thread &t : pool) {
      t.join();
    }
  }
  std::vector<MetricsRecord> out;
  for (std::vector<MetricsRecord> &cells : per_rep) {
    for (MetricsRecord &c : cells) {
      out.push_back(std::move(c));
    }
  }
  std::vector<MetricsRecord> agg = aggregate_records(spec, out);
  out.insert(out.end(), agg.begin(), agg.end());
  return out;
}

} // namespace drgp

#endif // DRGP_EXPERIMENT_HPP
