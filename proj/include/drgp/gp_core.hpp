#ifndef DRGP_GP_CORE_HPP
#define DRGP_GP_CORE_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/log.hpp"
#include "drgp/random.hpp"

namespace drgp {

/// Jitter schedule for factorizing nearly singular covariance matrices:
/// first try the matrix as given, then add initial_relative * mean(diag)
/// to the diagonal, doubling it on each of max_retries attempts.
struct JitterPolicy {
  double initial_relative = 1e-10;
  int max_retries = 10;
};

struct CholeskyResult {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

namespace detail {

inline bool try_llt(const Eigen::MatrixXd &a, double jitter,
                    Eigen::MatrixXd &lower) {
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (jitter == 0.0) {
    llt.compute(a);
  } else {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
  }
  if (llt.info() != Eigen::Success) {
    return false;
  }
  lower = llt.matrixL();
  return lower.allFinite();
}

} // namespace detail

inline CholeskyResult cholesky_psd(const Eigen::MatrixXd &a,
                                   const JitterPolicy &policy = {}) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("cholesky_psd: matrix is not square");
  }
  if (a.size() == 0) {
    throw InvalidArgument("cholesky_psd: empty matrix");
  }
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (!a.allFinite() || (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("cholesky_psd: matrix is not symmetric and finite");
  }
  CholeskyResult out;
  if (detail::try_llt(a, 0.0, out.lower)) {
    return out;
  }
  const double mean_diag = a.diagonal().mean();
  double jitter = policy.initial_relative * (mean_diag > 0.0 ? mean_diag : 1.0);
  for (int attempt = 0; attempt < policy.max_retries; ++attempt, jitter *= 2.0) {
    if (detail::try_llt(a, jitter, out.lower)) {
      out.jitter = jitter;
      if (log_enabled(LogLevel::Debug)) {
        log(LogLevel::Debug, "cholesky_psd: added jitter " + std::to_string(jitter));
      }
      return out;
    }
  }
  throw NotFactorizable("cholesky_psd: matrix not positive definite after " +
                        std::to_string(policy.max_retries) + " jitter retries");
}

/// (L L^T)^{-1} from a lower Cholesky factor.
inline Eigen::MatrixXd inverse_from_cholesky(const Eigen::MatrixXd &lower) {
  const Eigen::Index n = lower.rows();
  Eigen::MatrixXd inv_lower = Eigen::MatrixXd::Identity(n, n);
  lower.triangularView<Eigen::Lower>().solveInPlace(inv_lower);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  out.selfadjointView<Eigen::Lower>().rankUpdate(inv_lower.transpose());
  return out.selfadjointView<Eigen::Lower>();
}

inline double log_det_from_cholesky(const Eigen::MatrixXd &lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

struct GaussianPosterior {
  Eigen::VectorXd means;
  Eigen::MatrixXd cov;
  Eigen::VectorXd per_point_sd;

  static GaussianPosterior from_moments(Eigen::VectorXd means, Eigen::MatrixXd cov) {
    GaussianPosterior out;
    out.cov = 0.5 * (cov + cov.transpose());
    out.means = std::move(means);
    out.per_point_sd = out.cov.diagonal().array().max(0.0).sqrt();
    return out;
  }

  std::size_t size() const { return static_cast<std::size_t>(means.size()); }
};

/// Exact zero-mean GP conditioned on (inputs, targets). The kernel type must
/// provide `input_type` and `Eigen::MatrixXd gram(span a, span b) const`.
template <typename Kernel> struct FittedGP {
  using Input = typename Kernel::input_type;

  std::vector<Input> train_inputs;
  Eigen::VectorXd train_targets;
  Kernel kernel;
  double noise_var = 0.0;
  Eigen::MatrixXd chol_lower;
  Eigen::VectorXd weights;
  double jitter = 0.0;

  std::size_t size() const { return train_inputs.size(); }
};

template <typename Kernel>
FittedGP<Kernel> fit_exact_gp(std::vector<typename Kernel::input_type> inputs,
                              Eigen::VectorXd targets, Kernel kernel,
                              double noise_var) {
  if (inputs.empty()) {
    throw InvalidArgument("fit_exact_gp: no training points");
  }
  require_same_size(inputs.size(), static_cast<std::size_t>(targets.size()),
                    "fit_exact_gp: inputs vs targets");
  if (!(noise_var >= 0.0)) {
    throw InvalidArgument("fit_exact_gp: noise variance must be nonnegative");
  }
  using Input = typename Kernel::input_type;
  const std::span<const Input> rows(inputs);
  Eigen::MatrixXd k = kernel.gram(rows, rows);
  k.diagonal().array() += noise_var;
  CholeskyResult chol = cholesky_psd(k);

  FittedGP<Kernel> out;
  out.weights = chol.lower.triangularView<Eigen::Lower>().solve(targets);
  chol.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(out.weights);
  out.train_inputs = std::move(inputs);
  out.train_targets = std::move(targets);
  out.kernel = std::move(kernel);
  out.noise_var = noise_var;
  out.chol_lower = std::move(chol.lower);
  out.jitter = chol.jitter;
  return out;
}

/// Posterior of the latent function at a set of cross-covariances. `cross`
/// holds k(test, train) (m x n); `prior` holds k(test, test) (m x m).
template <typename Kernel>
GaussianPosterior posterior_from_cross(const FittedGP<Kernel> &model,
                                       const Eigen::MatrixXd &cross,
                                       const Eigen::MatrixXd &prior) {
  if (cross.cols() != model.chol_lower.rows()) {
    throw DimensionMismatch("posterior: cross-covariance width does not match training size");
  }
  Eigen::VectorXd means = cross * model.weights;
  Eigen::MatrixXd v = model.chol_lower.template triangularView<Eigen::Lower>().solve(cross.transpose());
  Eigen::MatrixXd cov = prior;
  cov.noalias() -= v.transpose() * v;
  return GaussianPosterior::from_moments(std::move(means), std::move(cov));
}

template <typename Kernel>
GaussianPosterior posterior(const FittedGP<Kernel> &model,
                            std::span<const typename Kernel::input_type> test) {
  using Input = typename Kernel::input_type;
  const std::span<const Input> train(model.train_inputs);
  return posterior_from_cross(model, model.kernel.gram(test, train),
                              model.kernel.gram(test, test));
}

inline double log_marginal_likelihood(const Eigen::VectorXd &targets,
                                      const Eigen::VectorXd &weights,
                                      const Eigen::MatrixXd &chol_lower) {
  const double n = static_cast<double>(targets.size());
  return -0.5 * targets.dot(weights) - 0.5 * log_det_from_cholesky(chol_lower) -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

template <typename Kernel>
double log_marginal_likelihood(const FittedGP<Kernel> &model) {
  return log_marginal_likelihood(model.train_targets, model.weights, model.chol_lower);
}

/// Draws `count` joint samples (rows) from a Gaussian posterior.
inline Eigen::MatrixXd sample_posterior(const GaussianPosterior &post,
                                        std::size_t count, std::uint64_t seed) {
  if (count == 0) {
    throw InvalidArgument("sample_posterior: count must be positive");
  }
  const Eigen::Index m = post.means.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), m);
  if (post.cov.cwiseAbs().maxCoeff() == 0.0) {
    out.rowwise() = post.means.transpose();
    return out;
  }
  const CholeskyResult chol = cholesky_psd(post.cov);
  Rng rng(seed);
  Eigen::VectorXd z(m);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index j = 0; j < m; ++j) {
      z[j] = standard_normal(rng);
    }
    out.row(r) = (post.means + chol.lower.triangularView<Eigen::Lower>() * z).transpose();
  }
  return out;
}

} // namespace drgp

#endif // DRGP_GP_CORE_HPP
