#ifndef DRGP_PIPELINE_HPP
#define DRGP_PIPELINE_HPP

#include <Eigen/Core>

#include <span>
#include <vector>

#include "drgp/errors.hpp"
#include "drgp/kernels.hpp"
#include "drgp/propensity.hpp"

namespace drgp {

/// Response-model inputs from covariates, treatments and per-unit PS
/// estimates (matched by unit_index).
inline std::vector<ThetaRow> theta_rows(const Eigen::MatrixXd &x, const Eigen::VectorXd &t,
                                        std::span<const PropensityEstimate> ps) {
  require_same_size(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(t.size()), "theta_rows: X vs t");
  require_same_size(static_cast<std::size_t>(x.rows()), ps.size(), "theta_rows: X vs PS");
  std::vector<ThetaRow> rows(static_cast<std::size_t>(x.rows()));
  std::vector<bool> seen(rows.size(), false);
  for (const PropensityEstimate &e : ps) {
    if (e.unit_index >= rows.size() || seen[e.unit_index]) {
      throw InvalidArgument("theta_rows: PS estimates must cover each unit exactly once");
    }
    seen[e.unit_index] = true;
    ThetaRow &row = rows[e.unit_index];
    row.ps_mean = e.mean;
    row.ps_var = e.variance;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].covariates = x.row(static_cast<Eigen::Index>(i)).transpose();
    rows[i].treatment = t[static_cast<Eigen::Index>(i)];
  }
  return rows;
}

} // namespace drgp

#endif // DRGP_PIPELINE_HPP
