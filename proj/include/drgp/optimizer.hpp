#ifndef DRGP_OPTIMIZER_HPP
#define DRGP_OPTIMIZER_HPP

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "drgp/errors.hpp"

namespace drgp {

struct AdamOptions {
  int epochs = 1000;
  double learning_rate = 0.0015;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (epochs < 1) {
      throw InvalidArgument("optimizer: epochs must be >= 1");
    }
    if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
        !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
      throw InvalidArgument("optimizer: invalid Adam settings");
    }
  }
};

struct ValueAndGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

struct AscentResult {
  Eigen::VectorXd x;
  double value = 0.0;            // objective at x
  std::vector<double> trace;     // objective before each update, then final
};

/// Adam ascent on an objective returning value and gradient. One epoch is one
/// full-batch gradient step. Throws NonFiniteObjective if the objective or its
/// gradient stops being finite.
template <typename Objective>
AscentResult adam_maximize(Objective &&objective, Eigen::VectorXd x0,
                           const AdamOptions &options) {
  options.validate();
  AscentResult out;
  out.x = std::move(x0);
  out.trace.reserve(static_cast<std::size_t>(options.epochs) + 1);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(out.x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(out.x.size());
  double b1_power = 1.0;
  double b2_power = 1.0;
  auto checked = [&](const Eigen::VectorXd &x, int epoch) {
    ValueAndGradient vg = objective(x);
    if (!std::isfinite(vg.value) || !vg.gradient.allFinite()) {
      throw NonFiniteObjective("optimizer diverged at epoch " + std::to_string(epoch));
    }
    return vg;
  };
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const ValueAndGradient vg = checked(out.x, epoch);
    out.trace.push_back(vg.value);
    b1_power *= options.beta1;
    b2_power *= options.beta2;
    m = options.beta1 * m + (1.0 - options.beta1) * vg.gradient;
    v = options.beta2 * v + (1.0 - options.beta2) * vg.gradient.cwiseAbs2();
    const double c1 = 1.0 - b1_power;
    const double c2 = 1.0 - b2_power;
    out.x.array() += options.learning_rate * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + options.epsilon);
  }
  out.value = checked(out.x, options.epochs).value;
  out.trace.push_back(out.value);
  return out;
}

/// Relative change of the objective over the last `window` entries of a trace.
inline double trailing_relative_change(const std::vector<double> &trace, std::size_t window) {
  if (trace.size() < 2) {
    return 0.0;
  }
  const std::size_t w = std::min(window, trace.size() - 1);
  const double last = trace.back();
  const double earlier = trace[trace.size() - 1 - w];
  return std::abs(last - earlier) / std::max(std::abs(last), 1e-12);
}

} // namespace drgp

#endif // DRGP_OPTIMIZER_HPP
