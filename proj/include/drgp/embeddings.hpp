#ifndef DRGP_EMBEDDINGS_HPP
#define DRGP_EMBEDDINGS_HPP

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>

#include "drgp/errors.hpp"
#include "drgp/kernels.hpp"

// Kernel mean embeddings of 1-D Gaussians under the normalized Gaussian base
// kernel gamma^2 N(theta | theta', l^2). The PRBF value k(a, b) is the inner
// product of the two embeddings, so k(a, a) is already a squared norm; MMD^2
// is assembled from those squared norms.

namespace drgp {

struct EmbeddingNormResult {
  double value = 0.0;
  double lengthscale = 0.0;
  double variance = 0.0;
};

namespace detail {
inline void require_scalar_input(const GaussianInput &in, const char *what) {
  if (in.dim() != 1) {
    throw DimensionMismatch(std::string(what) + ": embeddings are defined for 1-D inputs");
  }
}
} // namespace detail

inline EmbeddingNormResult kme_norm(const GaussianInput &input, double gamma_sq,
                                    double lengthscale) {
  detail::require_scalar_input(input, "kme_norm_sq");
  if (!(lengthscale > 0.0)) {
    throw InvalidArgument("kme_norm_sq: lengthscale must be positive");
  }
  const double var = input.variances[0];
  EmbeddingNormResult out;
  out.lengthscale = lengthscale;
  out.variance = var;
  out.value = gamma_sq / std::sqrt(2.0 * std::numbers::pi * (lengthscale * lengthscale + (var + var)));
  return out;
}

inline double kme_norm_sq(const GaussianInput &input, double gamma_sq, double lengthscale) {
  return kme_norm(input, gamma_sq, lengthscale).value;
}

namespace detail {
// 1-D PRBF written so that cross(a, a) is bitwise equal to kme_norm_sq(a).
inline double cross_1d(const GaussianInput &a, const GaussianInput &b, double gamma_sq, double lengthscale) {
  const double s = lengthscale * lengthscale + (a.variances[0] + b.variances[0]);
  const double d = a.means[0] - b.means[0];
  return gamma_sq / std::sqrt(2.0 * std::numbers::pi * s) * std::exp(-d * d / (2.0 * s));
}

inline double clamp_mmd(double raw) {
  if (raw >= 0.0) {
    return raw;
  }
  if (raw >= -1e-12) {
    return 0.0;
  }
  throw InternalConsistency("mmd_sq: negative squared discrepancy " + std::to_string(raw));
}
} // namespace detail

inline double mmd_sq(const GaussianInput &a, const GaussianInput &b, double gamma_sq,
                     double lengthscale) {
  detail::require_scalar_input(a, "mmd_sq");
  detail::require_scalar_input(b, "mmd_sq");
  const double raw = kme_norm_sq(a, gamma_sq, lengthscale) + kme_norm_sq(b, gamma_sq, lengthscale) -
                     2.0 * detail::cross_1d(a, b, gamma_sq, lengthscale);
  return detail::clamp_mmd(raw);
}

/// Pairwise MMD^2 from a single PRBF Gram matrix: M = diag + diag^T - 2 K.
inline Eigen::MatrixXd mmd_matrix(std::span<const GaussianInput> inputs, double gamma_sq,
                                  double lengthscale) {
  const Eigen::Index n = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    detail::require_scalar_input(inputs[static_cast<std::size_t>(j)], "mmd_matrix");
    for (Eigen::Index i = j; i < n; ++i) {
      k(i, j) = detail::cross_1d(inputs[static_cast<std::size_t>(i)], inputs[static_cast<std::size_t>(j)], gamma_sq,
                                 lengthscale);
      k(j, i) = k(i, j);
    }
  }
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      m(i, j) = i == j ? 0.0 : detail::clamp_mmd(k(i, i) + k(j, j) - 2.0 * k(i, j));
    }
  }
  return m;
}

} // namespace drgp

#endif // DRGP_EMBEDDINGS_HPP
