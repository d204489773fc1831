#ifndef DRGP_EVAL_HPP
#define DRGP_EVAL_HPP

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/random.hpp"

namespace drgp {

namespace detail {
inline void check_intervals(const Eigen::VectorXd &lo, const Eigen::VectorXd &hi) {
  require_same_size(static_cast<std::size_t>(lo.size()), static_cast<std::size_t>(hi.size()),
                    "interval bounds");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) {
      throw MisorderedInterval("interval " + std::to_string(i) + " has lower bound above upper bound");
    }
  }
}
} // namespace detail

/// Fraction of units whose interval contains the true ADRF (inclusive).
inline double coverage_90(const Eigen::VectorXd &tau, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi) {
  detail::check_intervals(lo, hi);
  require_same_size(static_cast<std::size_t>(tau.size()), static_cast<std::size_t>(lo.size()), "coverage_90");
  if (tau.size() == 0) {
    throw InvalidArgument("coverage_90: no units");
  }
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    covered += (lo[i] <= tau[i] && tau[i] <= hi[i]) ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(tau.size());
}

/// Mean interval length.
inline double interval_length_90(const Eigen::VectorXd &lo, const Eigen::VectorXd &hi) {
  detail::check_intervals(lo, hi);
  if (lo.size() == 0) {
    throw InvalidArgument("interval_length_90: no units");
  }
  return (hi - lo).mean();
}

struct BiasRmse {
  double bias = 0.0;
  double rmse = 0.0;
};

/// Per-sample bias_j = mean_i(tau_i - Y_ji) and rmse_j, averaged over samples
/// (rows of `samples`).
inline BiasRmse bias_and_rmse(const Eigen::VectorXd &tau, const Eigen::MatrixXd &samples) {
  if (samples.rows() < 1) {
    throw InvalidArgument("bias_and_rmse: need at least one sample");
  }
  require_same_size(static_cast<std::size_t>(tau.size()), static_cast<std::size_t>(samples.cols()),
                    "bias_and_rmse");
  BiasRmse out;
  for (Eigen::Index j = 0; j < samples.rows(); ++j) {
    const Eigen::ArrayXd err = tau.array() - samples.row(j).transpose().array();
    out.bias += err.mean();
    out.rmse += std::sqrt(err.square().mean());
  }
  out.bias /= static_cast<double>(samples.rows());
  out.rmse /= static_cast<double>(samples.rows());
  return out;
}

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw InvalidArgument("quantile: no values");
  }
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------
// Hirano-Imbens imputation baseline
// ---------------------------------------------------------------------------

/// Ordinary least squares via column-pivoted QR. Throws SingularDesign when the
/// design is rank deficient.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd &design, const Eigen::VectorXd &y) {
  require_same_size(static_cast<std::size_t>(design.rows()), static_cast<std::size_t>(y.size()), "least_squares");
  if (design.rows() < design.cols()) {
    throw SingularDesign("least_squares: fewer rows than regressors");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw SingularDesign("least_squares: design has rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(design.cols()));
  }
  return qr.solve(y);
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd &x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

/// Quadratic imputation surface in treatment t and expected dosage p:
/// columns {1, t, t^2, p, p^2, t p}.
inline Eigen::MatrixXd hi_design(const Eigen::VectorXd &t, const Eigen::VectorXd &p) {
  Eigen::MatrixXd d(t.size(), 6);
  d.col(0).setOnes();
  d.col(1) = t;
  d.col(2) = t.array().square();
  d.col(3) = p;
  d.col(4) = p.array().square();
  d.col(5) = t.cwiseProduct(p);
  return d;
}

struct HiModel {
  Eigen::VectorXd stage1; // intercept then one coefficient per covariate
  Eigen::VectorXd stage2; // {1, t, t^2, p, p^2, t p}
  Eigen::VectorXd expected_dosage;

  /// Fitted stage-2 values at the training units.
  Eigen::VectorXd fitted(const Eigen::VectorXd &t) const { return hi_design(t, expected_dosage) * stage2; }

  /// ADRF at each dose: stage-2 prediction with t fixed, averaged over units.
  Eigen::VectorXd adrf(const Eigen::VectorXd &doses) const {
    const double p1 = expected_dosage.mean();
    const double p2 = expected_dosage.array().square().mean();
    const Eigen::VectorXd &c = stage2;
    Eigen::VectorXd out(doses.size());
    for (Eigen::Index i = 0; i < doses.size(); ++i) {
      const double t = doses[i];
      out[i] = c[0] + c[1] * t + c[2] * t * t + c[3] * p1 + c[4] * p2 + c[5] * t * p1;
    }
    return out;
  }
};

inline HiModel fit_hi(const Eigen::MatrixXd &x, const Eigen::VectorXd &t, const Eigen::VectorXd &y) {
  require_same_size(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(t.size()), "hi: X vs t");
  require_same_size(static_cast<std::size_t>(t.size()), static_cast<std::size_t>(y.size()), "hi: t vs y");
  if (x.rows() <= std::max<Eigen::Index>(x.cols() + 1, 6)) {
    throw TooFewUnits("hi_baseline: more units than regression terms required");
  }
  HiModel model;
  const Eigen::MatrixXd design1 = with_intercept(x);
  model.stage1 = least_squares(design1, t);
  model.expected_dosage = design1 * model.stage1;
  model.stage2 = least_squares(hi_design(t, model.expected_dosage), y);
  return model;
}

struct HiOptions {
  std::size_t n_bootstrap = 50;
  std::uint64_t seed = 0;
  double level = 0.90;
};

struct HiResult {
  HiModel model;
  Eigen::VectorXd estimate;  // full-sample ADRF at each observed dose
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd bootstrap; // n_bootstrap x n ADRF estimates
};

/// ADRF at the observed doses with percentile bootstrap intervals.
inline HiResult hi_baseline(const Eigen::MatrixXd &x, const Eigen::VectorXd &t, const Eigen::VectorXd &y,
                            const HiOptions &options = {}) {
  if (options.n_bootstrap < 1) {
    throw InvalidArgument("hi_baseline: n_bootstrap must be >= 1");
  }
  HiResult out;
  out.model = fit_hi(x, t, y);
  out.estimate = out.model.adrf(t);
  const Eigen::Index n = x.rows();
  out.bootstrap.resize(static_cast<Eigen::Index>(options.n_bootstrap), n);
  Rng rng(options.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::MatrixXd xb(n, x.cols());
  Eigen::VectorXd tb(n), yb(n);
  for (std::size_t b = 0; b < options.n_bootstrap; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index k = pick(rng);
      xb.row(i) = x.row(k);
      tb[i] = t[k];
      yb[i] = y[k];
    }
    out.bootstrap.row(static_cast<Eigen::Index>(b)) = fit_hi(xb, tb, yb).adrf(t).transpose();
  }
  const double tail = 0.5 * (1.0 - options.level);
  out.lower.resize(n);
  out.upper.resize(n);
  std::vector<double> column(options.n_bootstrap);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < options.n_bootstrap; ++b) {
      column[b] = out.bootstrap(static_cast<Eigen::Index>(b), i);
    }
    out.lower[i] = quantile(column, tail);
    out.upper[i] = quantile(column, 1.0 - tail);
  }
  return out;
}

} // namespace drgp

#endif // DRGP_EVAL_HPP
