#ifndef DRGP_TESTS_SUPPORT_HPP
#define DRGP_TESTS_SUPPORT_HPP

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <vector>

#include "drgp/kernels.hpp"
#include "drgp/random.hpp"

namespace drgp::test {

inline Eigen::VectorXd normal_vector(Rng &rng, Eigen::Index n, double sd = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v[i] = sd * standard_normal(rng);
  }
  return v;
}

inline double uniform(Rng &rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::vector<Eigen::VectorXd> random_points(Rng &rng, std::size_t n, Eigen::Index d) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(normal_vector(rng, d));
  }
  return out;
}

/// Rows with a random PS belief, `d` covariates and a treatment.
inline std::vector<ThetaRow> random_rows(Rng &rng, std::size_t n, Eigen::Index d) {
  std::vector<ThetaRow> rows(n);
  for (ThetaRow &r : rows) {
    r.ps_mean = standard_normal(rng);
    r.ps_var = uniform(rng, 0.0, 0.5);
    r.covariates = normal_vector(rng, d);
    r.treatment = standard_normal(rng);
  }
  return rows;
}

inline KernelParams random_params(Rng &rng, Eigen::Index rest_dim) {
  KernelParams p;
  p.gamma_sq = uniform(rng, 0.3, 3.0);
  p.omega_sq = uniform(rng, 0.3, 3.0);
  p.lengthscales.resize(rest_dim);
  for (Eigen::Index k = 0; k < rest_dim; ++k) {
    p.lengthscales[k] = uniform(rng, 0.4, 2.0);
  }
  p.rho = uniform(rng, 0.4, 2.0);
  p.symg_a = uniform(rng, 0.5, 5.0);
  p.noise_var = uniform(rng, 0.05, 0.5);
  return p;
}

/// (min, max) eigenvalue of a symmetric matrix.
inline std::pair<double, double> eigen_range(const Eigen::MatrixXd &k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

} // namespace drgp::test

#endif // DRGP_TESTS_SUPPORT_HPP
