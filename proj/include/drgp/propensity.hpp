#ifndef DRGP_PROPENSITY_HPP
#define DRGP_PROPENSITY_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/gp_core.hpp"
#include "drgp/kernels.hpp"
#include "drgp/optimizer.hpp"
#include "drgp/random.hpp"

namespace drgp {

enum class PsVarianceMode {
  Epistemic, // latent-function posterior variance only
  Predictive // plus the learned observation noise
};

struct PropensityConfig {
  VectorKernelFamily kernel_family = VectorKernelFamily::MaternHalf;
  int epochs = 1000;
  double learning_rate = 0.0015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  PsVarianceMode variance_mode = PsVarianceMode::Epistemic;

  AdamOptions adam() const {
    return AdamOptions{.epochs = epochs, .learning_rate = learning_rate, .beta1 = beta1,
                       .beta2 = beta2, .epsilon = epsilon};
  }
};

struct PropensityEstimate {
  std::size_t unit_index = 0;
  double mean = 0.0;
  double variance = 0.0;
  int fold = 0; // fold whose model produced the estimate (the unit's held-out fold)
};

struct PropensityFit {
  FittedGP<VectorKernel> gp;
  std::vector<double> trace;
};

struct Folds {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Uniform random halving of 0..n-1; sizes differ by at most one.
inline Folds split_folds(std::size_t n, std::uint64_t seed) {
  if (n < 4) {
    throw TooFewUnits("split_folds: need at least 4 units, got " + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates with explicit draws keeps the partition independent of the
  // standard library's shuffle implementation.
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  Folds folds;
  folds.first.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n / 2));
  folds.second.assign(perm.begin() + static_cast<std::ptrdiff_t>(n / 2), perm.end());
  std::sort(folds.first.begin(), folds.first.end());
  std::sort(folds.second.begin(), folds.second.end());
  return folds;
}

inline std::vector<Eigen::VectorXd> matrix_rows(const Eigen::MatrixXd &x) {
  std::vector<Eigen::VectorXd> rows(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    rows[static_cast<std::size_t>(i)] = x.row(i).transpose();
  }
  return rows;
}

namespace detail {

inline double median_pairwise_distance(const std::vector<Eigen::VectorXd> &rows) {
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t i = j + 1; i < rows.size(); ++i) {
      d.push_back((rows[i] - rows[j]).norm());
    }
  }
  if (d.empty()) {
    return 1.0;
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

} // namespace detail

/// Zero-mean GP for E[T|X]: maximizes the LML of t over (scale, length-scale,
/// noise) in log-space with Adam. Starts from scale = mean(t^2), length-scale
/// = median pairwise distance, noise = Var(t)/2.
inline PropensityFit fit_propensity(const Eigen::MatrixXd &x, const Eigen::VectorXd &t,
                                    const PropensityConfig &config = {}) {
  require_same_size(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(t.size()),
                    "fit_propensity: X vs t");
  if (x.rows() < 2) {
    throw TooFewUnits("fit_propensity: need at least two units");
  }
  std::vector<Eigen::VectorXd> rows = matrix_rows(x);
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      dist(i, j) = (x.row(i) - x.row(j)).norm();
    }
  }
  const bool matern = config.kernel_family == VectorKernelFamily::MaternHalf;
  const double second_moment = t.squaredNorm() / static_cast<double>(n);
  const double mean = t.mean();
  const double var = (t.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::VectorXd u0(3);
  u0 << std::log(second_moment > 0.0 ? second_moment : 1.0),
      std::log(detail::median_pairwise_distance(rows)), std::log(var > 0.0 ? 0.5 * var : 1e-2);

  auto objective = [&](const Eigen::VectorXd &u) {
    const double scale = std::exp(u[0]);
    const double ell = std::exp(u[1]);
    const double noise = std::exp(u[2]);
    Eigen::MatrixXd ratio = matern ? Eigen::MatrixXd(dist / ell)
                                   : Eigen::MatrixXd(dist.array().square() / (ell * ell));
    Eigen::MatrixXd k = matern ? Eigen::MatrixXd(scale * (-ratio.array()).exp())
                               : Eigen::MatrixXd(scale * (-0.5 * ratio.array()).exp());
    Eigen::MatrixXd ky = k;
    ky.diagonal().array() += noise;
    const CholeskyResult chol = cholesky_psd(ky);
    Eigen::VectorXd alpha = chol.lower.triangularView<Eigen::Lower>().solve(t);
    chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);
    Eigen::MatrixXd w = -inverse_from_cholesky(chol.lower);
    w.noalias() += alpha * alpha.transpose();
    ValueAndGradient out;
    out.value = log_marginal_likelihood(t, alpha, chol.lower);
    out.gradient.resize(3);
    out.gradient[0] = 0.5 * (w.array() * k.array()).sum();
    out.gradient[1] = 0.5 * (w.array() * k.array() * ratio.array()).sum();
    out.gradient[2] = 0.5 * noise * w.trace();
    return out;
  };
  AscentResult result = adam_maximize(objective, u0, config.adam());
  PropensityFit fit;
  fit.trace = std::move(result.trace);
  VectorKernel kernel{config.kernel_family, std::exp(result.x[0]), std::exp(result.x[1])};
  fit.gp = fit_exact_gp(std::move(rows), t, kernel, std::exp(result.x[2]));
  return fit;
}

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd &x, const std::vector<std::size_t> &idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

inline Eigen::VectorXd take(const Eigen::VectorXd &v, const std::vector<std::size_t> &idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
  }
  return out;
}

} // namespace detail

/// Two-fold cross-fitting: each fold's model scores the other fold's units.
/// Results are ordered by unit index.
inline std::vector<PropensityEstimate> cross_fitted_scores(const Eigen::MatrixXd &x,
                                                           const Eigen::VectorXd &t,
                                                           const PropensityConfig &config = {}) {
  require_same_size(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(t.size()),
                    "cross_fitted_scores: X vs t");
  const Folds folds = split_folds(static_cast<std::size_t>(x.rows()), config.seed);
  std::vector<PropensityEstimate> out(static_cast<std::size_t>(x.rows()));
  const std::vector<std::size_t> *train_sets[2] = {&folds.first, &folds.second};
  for (int model = 0; model < 2; ++model) {
    const std::vector<std::size_t> &train = *train_sets[model];
    const std::vector<std::size_t> &held_out = *train_sets[1 - model];
    const PropensityFit fit =
        fit_propensity(detail::take_rows(x, train), detail::take(t, train), config);
    const std::vector<Eigen::VectorXd> test = matrix_rows(detail::take_rows(x, held_out));
    const GaussianPosterior post = posterior(fit.gp, std::span<const Eigen::VectorXd>(test));
    for (std::size_t i = 0; i < held_out.size(); ++i) {
      PropensityEstimate &est = out[held_out[i]];
      est.unit_index = held_out[i];
      est.mean = post.means[static_cast<Eigen::Index>(i)];
      est.variance = std::max(0.0, post.cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      if (config.variance_mode == PsVarianceMode::Predictive) {
        est.variance += fit.gp.noise_var;
      }
      est.fold = 1 - model;
    }
  }
  return out;
}

struct CandidateDiagnostics {
  double signed_bias = 0.0; // sum_i (mu_hat_i - t_i)
  double rmse = 0.0;
};

struct PropensitySelection {
  std::size_t chosen = 0;
  PropensityConfig config;
  std::vector<CandidateDiagnostics> diagnostics;
  std::vector<PropensityEstimate> estimates; // of the chosen candidate
};

inline CandidateDiagnostics propensity_diagnostics(std::span<const PropensityEstimate> est,
                                                   const Eigen::VectorXd &t) {
  require_same_size(est.size(), static_cast<std::size_t>(t.size()), "propensity diagnostics");
  CandidateDiagnostics d;
  double sq = 0.0;
  for (const PropensityEstimate &e : est) {
    const double err = e.mean - t[static_cast<Eigen::Index>(e.unit_index)];
    d.signed_bias += err;
    sq += err * err;
  }
  d.rmse = std::sqrt(sq / static_cast<double>(est.size()));
  return d;
}

/// Index of the candidate with the smallest absolute out-of-sample bias; ties
/// go to the earliest candidate.
inline std::size_t select_by_bias(std::span<const CandidateDiagnostics> diagnostics) {
  if (diagnostics.empty()) {
    throw InvalidArgument("select_propensity_model: no candidates");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < diagnostics.size(); ++i) {
    if (std::abs(diagnostics[i].signed_bias) < std::abs(diagnostics[best].signed_bias)) {
      best = i;
    }
  }
  return best;
}

inline PropensitySelection select_propensity_model(std::span<const PropensityConfig> candidates,
                                                   const Eigen::MatrixXd &x,
                                                   const Eigen::VectorXd &t) {
  if (candidates.empty()) {
    throw InvalidArgument("select_propensity_model: no candidates");
  }
  PropensitySelection sel;
  std::vector<std::vector<PropensityEstimate>> all;
  for (const PropensityConfig &c : candidates) {
    all.push_back(cross_fitted_scores(x, t, c));
    sel.diagnostics.push_back(propensity_diagnostics(all.back(), t));
  }
  sel.chosen = select_by_bias(sel.diagnostics);
  sel.config = candidates[sel.chosen];
  sel.estimates = std::move(all[sel.chosen]);
  return sel;
}

} // namespace drgp

#endif // DRGP_PROPENSITY_HPP
