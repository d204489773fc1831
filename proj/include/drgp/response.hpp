#ifndef DRGP_RESPONSE_HPP
#define DRGP_RESPONSE_HPP

#include <Eigen/Core>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/gp_core.hpp"
#include "drgp/kernels.hpp"
#include "drgp/log.hpp"
#include "drgp/optimizer.hpp"

namespace drgp {

inline double standard_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidArgument("normal quantile: probability must lie in (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

/// Median of a half-Normal(scale) variable divided by its scale (~0.674490).
inline double half_normal_median_factor() {
  static const double factor = standard_normal_quantile(0.75);
  return factor;
}

inline double sample_sd(const Eigen::Ref<const Eigen::VectorXd> &v) {
  // A constant column is exactly 0; its rounded mean would leave ~1e-16.
  if (v.size() < 2 || v.minCoeff() == v.maxCoeff()) {
    return 0.0;
  }
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

inline double half_normal_log_density(double v, double scale) {
  if (v < 0.0) {
    throw NegativeValue("half_normal_log_density: value must be nonnegative");
  }
  if (!(scale > 0.0)) {
    throw InvalidArgument("half_normal_log_density: scale must be positive");
  }
  return std::log(std::sqrt(2.0 / std::numbers::pi) / scale) - v * v / (2.0 * scale * scale);
}

/// Half-Normal prior scales. gamma/omega scales put the prior median at
/// 2 SD(y) and SD(y)/2; length-scale scales follow the spread of each input.
struct PriorSpec {
  double gamma_scale = 1.0;
  double omega_scale = 1.0;
  Eigen::VectorXd lengthscale_scales; // per rest dimension
  double rho_scale = 1.0;
};

inline PriorSpec build_prior_spec(const Eigen::VectorXd &y) {
  if (y.size() < 2) {
    throw DegenerateTargets("build_prior_spec: need at least two targets");
  }
  const double sd = sample_sd(y);
  if (!(sd > 0.0)) {
    throw DegenerateTargets("build_prior_spec: targets have zero variance");
  }
  PriorSpec spec;
  spec.gamma_scale = 2.0 * sd / half_normal_median_factor();
  spec.omega_scale = 0.5 * sd / half_normal_median_factor();
  return spec;
}

namespace detail {

// Constant columns fall back to unit scale so the prior stays proper.
inline double scale_or_one(double sd) { return sd > 0.0 ? sd : 1.0; }

inline Eigen::MatrixXd rest_means(const KernelVariant &variant, std::span<const ThetaRow> rows) {
  const Eigen::Index d = rest_dim(variant, rows.front().covariates.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rest_input(variant, rows[i]).means.transpose();
  }
  return out;
}

inline Eigen::VectorXd treatments(std::span<const ThetaRow> rows) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t[static_cast<Eigen::Index>(i)] = rows[i].treatment;
  }
  return t;
}

/// Root-mean-square of the per-column SDs of the rest inputs and treatment;
/// the spread a shared length-scale has to cover.
inline double pooled_input_scale(const Eigen::MatrixXd &rest, const Eigen::VectorXd &t) {
  double acc = std::pow(scale_or_one(sample_sd(t)), 2);
  for (Eigen::Index k = 0; k < rest.cols(); ++k) {
    acc += std::pow(scale_or_one(sample_sd(rest.col(k))), 2);
  }
  return std::sqrt(acc / static_cast<double>(rest.cols() + 1));
}

} // namespace detail

inline PriorSpec build_prior_spec(const Eigen::VectorXd &y, const KernelVariant &variant,
                                  std::span<const ThetaRow> rows) {
  PriorSpec spec = build_prior_spec(y);
  require_same_size(rows.size(), static_cast<std::size_t>(y.size()), "build_prior_spec");
  const Eigen::MatrixXd rest = detail::rest_means(variant, rows);
  const Eigen::VectorXd t = detail::treatments(rows);
  spec.lengthscale_scales.resize(rest.cols());
  for (Eigen::Index k = 0; k < rest.cols(); ++k) {
    spec.lengthscale_scales[k] = detail::scale_or_one(sample_sd(rest.col(k)));
  }
  spec.rho_scale = variant.rest_form() == RestForm::Rbf ? detail::pooled_input_scale(rest, t)
                                                        : detail::scale_or_one(sample_sd(t));
  return spec;
}

/// Sum of half-Normal log densities over the variant's scale and length-scale
/// parameters, with its gradient in the unconstrained coordinates.
inline ValueAndGradient log_prior(const ParamLayout &layout, const PriorSpec &priors,
                                  const Eigen::VectorXd &u) {
  ValueAndGradient out;
  out.gradient = Eigen::VectorXd::Zero(layout.size());
  auto add = [&](Eigen::Index idx, double scale) {
    const double v = std::exp(u[idx]);
    out.value += half_normal_log_density(v, scale);
    out.gradient[idx] += -v * v / (scale * scale);
  };
  const KernelVariant &variant = layout.variant();
  if (auto idx = layout.gamma()) {
    add(*idx, priors.gamma_scale);
  }
  if (auto idx = layout.omega()) {
    // For the single-kernel RBF variants omega is the only output scale and
    // takes the gamma prior.
    add(*idx, variant.combine() == Combine::Sum ? priors.omega_scale : priors.gamma_scale);
  }
  for (Eigen::Index k = 0; k < layout.rest_dim(); ++k) {
    if (auto idx = layout.lengthscale(k)) {
      if (priors.lengthscale_scales.size() != layout.rest_dim()) {
        throw DimensionMismatch("prior: lengthscale scales do not match the input dimension");
      }
      add(*idx, priors.lengthscale_scales[k]);
    }
  }
  add(layout.rho(), priors.rho_scale);
  return out;
}

/// MAP objective LML(y) + log prior (flat when `priors` is empty) and its
/// gradient with respect to the unconstrained parameters. The LML gradient is
/// 1/2 tr((alpha alpha^T - K^-1) dK/du).
inline ValueAndGradient map_objective(const TrainingGram &gram, const ParamLayout &layout,
                                      const Eigen::VectorXd &y, const KernelParams &base,
                                      const std::optional<PriorSpec> &priors,
                                      const Eigen::VectorXd &u) {
  const KernelParams params = layout.unpack(u, base);
  const TrainingGram::Evaluation ev = gram.evaluate(params);
  Eigen::MatrixXd k = ev.full;
  k.diagonal().array() += params.noise_var;
  const CholeskyResult chol = cholesky_psd(k);
  Eigen::VectorXd alpha = chol.lower.triangularView<Eigen::Lower>().solve(y);
  chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);

  ValueAndGradient out;
  out.value = log_marginal_likelihood(y, alpha, chol.lower);
  Eigen::MatrixXd w = -inverse_from_cholesky(chol.lower);
  w.noalias() += alpha * alpha.transpose();
  out.gradient = gram.contract(params, ev, w, layout);
  out.gradient[layout.noise()] = 0.5 * params.noise_var * w.trace();
  if (priors) {
    const ValueAndGradient prior = log_prior(layout, *priors, u);
    out.value += prior.value;
    out.gradient += prior.gradient;
  }
  return out;
}

/// Gradient of the MAP objective in log-space parameters.
inline ValueAndGradient param_gradient(const KernelVariant &variant, const KernelParams &params,
                                       std::span<const ThetaRow> rows, const Eigen::VectorXd &y,
                                       const std::optional<PriorSpec> &priors,
                                       const Eigen::VectorXd &symg_floors = {}) {
  require_same_size(rows.size(), static_cast<std::size_t>(y.size()), "param_gradient");
  const TrainingGram gram(variant, rows, symg_floors);
  const ParamLayout layout(variant, gram.rest_dim());
  return map_objective(gram, layout, y, params, priors, layout.pack(params));
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct ResponseOptions {
  AdamOptions adam{.epochs = 7000, .learning_rate = 0.0025};
  std::uint64_t seed = 0;
  bool use_priors = true;
};

struct ResponseFit {
  KernelVariant variant;
  KernelParams initial_params;
  KernelParams params;
  FittedGP<VariantKernel> gp;
  std::vector<double> trace; // MAP objective per epoch, final value last
  double y_offset = 0.0;     // sample mean removed before fitting
  std::uint64_t seed = 0;

  double final_objective() const { return trace.empty() ? 0.0 : trace.back(); }
};

/// Deterministic starting point: gamma = SD(y), omega = SD(y)/4 (SD(y) when it
/// is the only scale), l_j = SD of rest column j, rho = SD(t) (pooled input
/// scale when shared), noise = 0.01 Var(y), A = median pairwise divergence.
inline KernelParams initial_params(const KernelVariant &variant, std::span<const ThetaRow> rows,
                                   const Eigen::VectorXd &y, const TrainingGram &gram) {
  const double sd_y = detail::scale_or_one(sample_sd(y));
  const Eigen::MatrixXd rest = detail::rest_means(variant, rows);
  const Eigen::VectorXd t = detail::treatments(rows);
  KernelParams p;
  p.gamma_sq = sd_y * sd_y;
  p.omega_sq = variant.combine() == Combine::Sum ? sd_y * sd_y / 16.0 : sd_y * sd_y;
  p.lengthscales.resize(rest.cols());
  for (Eigen::Index k = 0; k < rest.cols(); ++k) {
    p.lengthscales[k] = detail::scale_or_one(sample_sd(rest.col(k)));
  }
  p.rho = variant.rest_form() == RestForm::Rbf ? detail::pooled_input_scale(rest, t)
                                               : detail::scale_or_one(sample_sd(t));
  p.noise_var = 0.01 * sd_y * sd_y;
  if (variant.has_symg_a()) {
    std::vector<double> div = gram.symg_divergences();
    if (!div.empty()) {
      auto mid = div.begin() + static_cast<std::ptrdiff_t>(div.size() / 2);
      std::nth_element(div.begin(), mid, div.end());
      p.symg_a = *mid > 0.0 ? *mid : 1.0;
    }
  }
  return p;
}

inline ResponseFit fit_response(std::span<const ThetaRow> rows, const Eigen::VectorXd &y,
                                const KernelVariant &variant, const ResponseOptions &options = {}) {
  require_same_size(rows.size(), static_cast<std::size_t>(y.size()), "fit_response: rows vs y");
  if (rows.size() < 2) {
    throw TooFewUnits("fit_response: need at least two units");
  }
  const Eigen::VectorXd floors = variant.rest_form() == RestForm::Symg
                                     ? symg_variance_floors(variant, rows)
                                     : Eigen::VectorXd{};
  if (floors.size() > 0 && log_enabled(LogLevel::Debug)) {
    log(LogLevel::Debug, "a-symg variance floor on first dimension: " + std::to_string(floors[0]));
  }
  const TrainingGram gram(variant, rows, floors);
  const ParamLayout layout(variant, gram.rest_dim());

  ResponseFit fit;
  fit.variant = variant;
  fit.seed = options.seed;
  fit.y_offset = y.mean();
  const Eigen::VectorXd centered = y.array() - fit.y_offset;

  std::optional<PriorSpec> priors;
  if (options.use_priors) {
    priors = build_prior_spec(y, variant, rows);
  }
  fit.initial_params = initial_params(variant, rows, y, gram);
  AscentResult result = adam_maximize(
      [&](const Eigen::VectorXd &u) {
        return map_objective(gram, layout, centered, fit.initial_params, priors, u);
      },
      layout.pack(fit.initial_params), options.adam);
  fit.params = layout.unpack(result.x, fit.initial_params);
  fit.trace = std::move(result.trace);

  std::vector<ThetaRow> train(rows.begin(), rows.end());
  fit.gp = fit_exact_gp(std::move(train), centered, VariantKernel{variant, fit.params, floors},
                        fit.params.noise_var);
  return fit;
}

// ---------------------------------------------------------------------------
// ADRF posteriors
// ---------------------------------------------------------------------------

enum class AdrfMode {
  /// Latent posterior at each row itself (the default).
  Pointwise,
  /// For each row's dose t_i, the posterior of (1/m) sum_k h(pi_k, x_k, t_i)
  /// over the population formed by all rows.
  PopulationAverage
};

inline std::string_view to_string(AdrfMode mode) {
  return mode == AdrfMode::Pointwise ? "pointwise" : "population-average";
}

inline AdrfMode parse_adrf_mode(std::string_view s) {
  if (s == "pointwise") {
    return AdrfMode::Pointwise;
  }
  if (s == "population-average") {
    return AdrfMode::PopulationAverage;
  }
  throw InvalidArgument("unknown ADRF mode '" + std::string(s) + "' (valid: pointwise, population-average)");
}

/// Posterior of the population-averaged dose response at `doses`, averaging
/// the response surface over `population`. Exact for the sum/product kernel
/// structure: the rest term only enters through population means.
inline GaussianPosterior adrf_curve(const ResponseFit &fit, std::span<const ThetaRow> population,
                                    const Eigen::VectorXd &doses) {
  if (population.empty()) {
    throw InvalidArgument("adrf_curve: empty population");
  }
  const VariantKernel &kernel = fit.gp.kernel;
  const std::span<const ThetaRow> train(fit.gp.train_inputs);
  const Eigen::MatrixXd rest_pt = kernel.gram_parts(population, train).rest;
  const Eigen::MatrixXd rest_pp = kernel.gram_parts(population, population).rest;
  const Eigen::RowVectorXd rest_bar = rest_pt.colwise().mean();
  const double rest_pp_bar = rest_pp.mean();

  const Eigen::Index m = doses.size();
  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  const TreatForm tform = kernel.variant.treat_form();
  const bool sum = kernel.variant.combine() == Combine::Sum;
  Eigen::MatrixXd cross(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = detail::treat_value(tform, kernel.params, doses[i] - train[static_cast<std::size_t>(j)].treatment);
      cross(i, j) = sum ? rest_bar[j] + t : rest_bar[j] * t;
    }
  }
  Eigen::MatrixXd prior(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = detail::treat_value(tform, kernel.params, doses[i] - doses[j]);
      prior(i, j) = sum ? rest_pp_bar + t : rest_pp_bar * t;
    }
  }
  GaussianPosterior post = posterior_from_cross(fit.gp, cross, prior);
  post.means.array() += fit.y_offset;
  return post;
}

inline GaussianPosterior adrf_posterior(const ResponseFit &fit, std::span<const ThetaRow> rows,
                                        AdrfMode mode = AdrfMode::Pointwise) {
  if (mode == AdrfMode::Pointwise) {
    GaussianPosterior post = posterior(fit.gp, rows);
    post.means.array() += fit.y_offset;
    return post;
  }
  return adrf_curve(fit, rows, detail::treatments(rows));
}

struct CredibleIntervals {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Pointwise equal-tailed Gaussian intervals, mean -/+ z sd.
inline CredibleIntervals credible_interval(const GaussianPosterior &post, double level = 0.90) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("credible_interval: level must lie in (0, 1)");
  }
  const double z = standard_normal_quantile(0.5 + 0.5 * level);
  CredibleIntervals out;
  out.lower = post.means - z * post.per_point_sd;
  out.upper = post.means + z * post.per_point_sd;
  return out;
}

} // namespace drgp

#endif // DRGP_RESPONSE_HPP
