#ifndef DRGP_KERNELS_HPP
#define DRGP_KERNELS_HPP

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drgp/errors.hpp"

namespace drgp {

/// Per-dimension Gaussian belief over a point. Deterministic dimensions carry
/// variance exactly 0.
struct GaussianInput {
  Eigen::VectorXd means;
  Eigen::VectorXd variances;

  GaussianInput() = default;
  GaussianInput(Eigen::VectorXd m, Eigen::VectorXd v)
      : means(std::move(m)), variances(std::move(v)) {
    validate();
  }

  static GaussianInput deterministic(Eigen::VectorXd m) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m.size());
    return GaussianInput(std::move(m), std::move(v));
  }

  static GaussianInput scalar(double mean, double variance) {
    return GaussianInput(Eigen::VectorXd::Constant(1, mean),
                         Eigen::VectorXd::Constant(1, variance));
  }

  Eigen::Index dim() const { return means.size(); }

  void validate() const {
    require_same_size(static_cast<std::size_t>(means.size()),
                      static_cast<std::size_t>(variances.size()),
                      "GaussianInput: means vs variances");
    if (!means.allFinite() || !variances.allFinite() ||
        (variances.array() < 0.0).any()) {
      throw InvalidArgument("GaussianInput: entries must be finite with nonnegative variances");
    }
  }
};

inline double rbf(double t, double t_prime, double omega_sq, double rho) {
  const double d = t - t_prime;
  return omega_sq * std::exp(-(d * d) / (2.0 * rho * rho));
}

inline double matern_half(const Eigen::VectorXd &x, const Eigen::VectorXd &x_prime,
                          double scale, double lengthscale) {
  require_same_size(static_cast<std::size_t>(x.size()),
                    static_cast<std::size_t>(x_prime.size()), "matern_half");
  return scale * std::exp(-(x - x_prime).norm() / lengthscale);
}

/// Gaussian kernel averaged over independent Gaussian inputs, per-dimension
/// product form. With all variances 0 it is gamma_sq times the product of
/// normal densities N(mu_j | mu'_j, l_j^2).
inline double prbf(const GaussianInput &a, const GaussianInput &b, double gamma_sq,
                   const Eigen::VectorXd &lengthscales) {
  require_same_size(static_cast<std::size_t>(a.dim()), static_cast<std::size_t>(b.dim()),
                    "prbf: input dimensions");
  require_same_size(static_cast<std::size_t>(a.dim()),
                    static_cast<std::size_t>(lengthscales.size()), "prbf: lengthscales");
  double log_value = 0.0;
  for (Eigen::Index j = 0; j < a.dim(); ++j) {
    const double s = lengthscales[j] * lengthscales[j] + a.variances[j] + b.variances[j];
    const double d = a.means[j] - b.means[j];
    log_value += -0.5 * std::log(2.0 * std::numbers::pi * s) - d * d / (2.0 * s);
  }
  return gamma_sq * std::exp(log_value);
}

/// Symmetrized KL divergence between diagonal Gaussians.
inline double symg_divergence(const GaussianInput &a, const GaussianInput &b) {
  require_same_size(static_cast<std::size_t>(a.dim()), static_cast<std::size_t>(b.dim()),
                    "symg: input dimensions");
  if ((a.variances.array() <= 0.0).any() || (b.variances.array() <= 0.0).any()) {
    throw ZeroVariance("symg: all variances must be strictly positive");
  }
  double div = 0.0;
  for (Eigen::Index j = 0; j < a.dim(); ++j) {
    const double va = a.variances[j];
    const double vb = b.variances[j];
    const double d = a.means[j] - b.means[j];
    div += va / vb + vb / va + (1.0 / va + 1.0 / vb) * d * d - 2.0;
  }
  return div;
}

inline double symg(const GaussianInput &a, const GaussianInput &b, double symg_a) {
  return std::exp(-symg_divergence(a, b) / symg_a);
}

// ---------------------------------------------------------------------------
// Response-model kernel variants
// ---------------------------------------------------------------------------

enum class KernelTag { APrbf, ARbf, Prbf, Rbf, RbfNd, ASymg };

inline constexpr std::array<KernelTag, 6> all_kernel_tags = {
    KernelTag::APrbf, KernelTag::ARbf, KernelTag::Prbf,
    KernelTag::Rbf,   KernelTag::RbfNd, KernelTag::ASymg};

inline std::string_view to_string(KernelTag tag) {
  switch (tag) {
  case KernelTag::APrbf: return "a-prbf";
  case KernelTag::ARbf: return "a-rbf";
  case KernelTag::Prbf: return "prbf";
  case KernelTag::Rbf: return "rbf";
  case KernelTag::RbfNd: return "rbf-nd";
  case KernelTag::ASymg: return "a-symg";
  }
  return "?";
}

inline std::string valid_kernel_names() {
  std::string out;
  for (KernelTag tag : all_kernel_tags) {
    if (!out.empty()) {
      out += ", ";
    }
    out += to_string(tag);
  }
  return out;
}

inline KernelTag parse_kernel_tag(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (KernelTag tag : all_kernel_tags) {
    if (lower == to_string(tag)) {
      return tag;
    }
  }
  // Tables elsewhere call the no-PS ablation "RBF-NT".
  if (lower == "rbf-nt") {
    return KernelTag::RbfNd;
  }
  throw InvalidArgument("unknown kernel '" + std::string(name) +
                        "'; valid kernels: " + valid_kernel_names());
}

/// How the rest-of-input term (PS and covariates) and the treatment term
/// combine into the full kernel.
enum class Combine { Sum, Product };

enum class RestForm { Prbf, Rbf, Symg };

enum class TreatForm {
  ScaledRbf,     // omega^2 exp(-dt^2 / 2 rho^2), additive variants
  NormalDensity, // (2 pi rho^2)^{-1/2} exp(-dt^2 / 2 rho^2), PRBF's treatment dimension
  UnitRbf        // exp(-dt^2 / 2 rho^2), shared-rho RBF
};

struct KernelVariant {
  KernelTag tag = KernelTag::APrbf;

  bool uses_ps() const { return tag != KernelTag::RbfNd; }
  /// A-RBF is A-PRBF with every PS posterior variance set to 0; the plain RBF
  /// variants only ever see the PS mean.
  bool keeps_ps_variance() const {
    return tag == KernelTag::APrbf || tag == KernelTag::Prbf || tag == KernelTag::ASymg;
  }
  Combine combine() const {
    switch (tag) {
    case KernelTag::APrbf:
    case KernelTag::ARbf:
    case KernelTag::ASymg: return Combine::Sum;
    default: return Combine::Product;
    }
  }
  RestForm rest_form() const {
    switch (tag) {
    case KernelTag::Rbf:
    case KernelTag::RbfNd: return RestForm::Rbf;
    case KernelTag::ASymg: return RestForm::Symg;
    default: return RestForm::Prbf;
    }
  }
  TreatForm treat_form() const {
    switch (tag) {
    case KernelTag::Prbf: return TreatForm::NormalDensity;
    case KernelTag::Rbf:
    case KernelTag::RbfNd: return TreatForm::UnitRbf;
    default: return TreatForm::ScaledRbf;
    }
  }
  bool has_gamma() const { return rest_form() != RestForm::Rbf; }
  bool has_omega() const { return rest_form() == RestForm::Rbf || combine() == Combine::Sum; }
  bool has_lengthscales() const { return rest_form() == RestForm::Prbf; }
  bool has_symg_a() const { return rest_form() == RestForm::Symg; }

  friend bool operator==(const KernelVariant &, const KernelVariant &) = default;
};

/// One response-model input: a Gaussian PS belief, deterministic covariates
/// and the treatment level.
struct ThetaRow {
  double ps_mean = 0.0;
  double ps_var = 0.0;
  Eigen::VectorXd covariates;
  double treatment = 0.0;
};

/// Kernel hyperparameters. Which fields are live depends on the variant; for
/// RBF and RBF-ND the single output scale is omega_sq and rho is shared by all
/// dimensions, and for PRBF rho is the treatment length-scale.
struct KernelParams {
  double gamma_sq = 1.0;
  double omega_sq = 1.0;
  Eigen::VectorXd lengthscales;
  double rho = 1.0;
  double symg_a = 1.0;
  double noise_var = 0.0;
};

/// Number of non-treatment dimensions the variant sees.
inline Eigen::Index rest_dim(const KernelVariant &variant, Eigen::Index n_covariates) {
  return n_covariates + (variant.uses_ps() ? 1 : 0);
}

/// Non-treatment part of a row as a Gaussian input: [PS, covariates...].
/// Covariates are deterministic; the PS keeps its variance only for variants
/// that integrate over it.
inline GaussianInput rest_input(const KernelVariant &variant, const ThetaRow &row) {
  const Eigen::Index d = rest_dim(variant, row.covariates.size());
  Eigen::VectorXd means(d);
  Eigen::VectorXd vars = Eigen::VectorXd::Zero(d);
  Eigen::Index offset = 0;
  if (variant.uses_ps()) {
    means[0] = row.ps_mean;
    vars[0] = variant.keeps_ps_variance() ? row.ps_var : 0.0;
    offset = 1;
  }
  means.segment(offset, row.covariates.size()) = row.covariates;
  return GaussianInput(std::move(means), std::move(vars));
}

/// Variance floors for SymG: 1e-6 times the sample variance of each rest
/// dimension over `rows`, with 1e-6 for constant dimensions.
inline Eigen::VectorXd symg_variance_floors(const KernelVariant &variant,
                                            std::span<const ThetaRow> rows) {
  if (rows.empty()) {
    throw InvalidArgument("symg_variance_floors: no rows");
  }
  const Eigen::Index d = rest_dim(variant, rows.front().covariates.size());
  Eigen::MatrixXd means(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    means.row(static_cast<Eigen::Index>(i)) = rest_input(variant, rows[i]).means.transpose();
  }
  Eigen::VectorXd floors(d);
  const double n = static_cast<double>(rows.size());
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = means.col(j).mean();
    const double var =
        n > 1.0 ? (means.col(j).array() - mean).square().sum() / (n - 1.0) : 0.0;
    floors[j] = 1e-6 * (var > 0.0 ? var : 1.0);
  }
  return floors;
}

namespace detail {

/// Column-major rest inputs plus treatments for a block of rows.
struct RestBlock {
  Eigen::MatrixXd means;
  Eigen::MatrixXd vars;
  Eigen::VectorXd treat;
};

inline RestBlock make_rest_block(const KernelVariant &variant, std::span<const ThetaRow> rows,
                                 const Eigen::VectorXd &floors) {
  RestBlock block;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = rows.empty() ? 0 : rest_dim(variant, rows.front().covariates.size());
  block.means.resize(n, d);
  block.vars.resize(n, d);
  block.treat.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ThetaRow &row = rows[static_cast<std::size_t>(i)];
    if (rest_dim(variant, row.covariates.size()) != d) {
      throw DimensionMismatch("kernel rows have inconsistent covariate counts");
    }
    GaussianInput in = rest_input(variant, row);
    block.means.row(i) = in.means.transpose();
    block.vars.row(i) = in.variances.transpose();
    block.treat[i] = row.treatment;
  }
  if (variant.rest_form() == RestForm::Symg) {
    if (floors.size() != d) {
      throw DimensionMismatch("symg variance floors do not match the input dimension");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      block.vars.col(j) = block.vars.col(j).cwiseMax(floors[j]);
    }
  }
  return block;
}

inline void check_params(const KernelVariant &variant, const KernelParams &params,
                         Eigen::Index d) {
  if (variant.has_lengthscales() && params.lengthscales.size() != d) {
    throw DimensionMismatch("kernel params: expected " + std::to_string(d) +
                            " lengthscales, got " +
                            std::to_string(params.lengthscales.size()));
  }
}

inline double treat_value(TreatForm form, const KernelParams &p, double dt) {
  const double r2 = p.rho * p.rho;
  const double e = std::exp(-(dt * dt) / (2.0 * r2));
  switch (form) {
  case TreatForm::ScaledRbf: return p.omega_sq * e;
  case TreatForm::NormalDensity: return e / std::sqrt(2.0 * std::numbers::pi * r2);
  case TreatForm::UnitRbf: return e;
  }
  return e;
}

} // namespace detail

/// A kernel variant bound to parameters, usable as an exact-GP kernel.
struct VariantKernel {
  using input_type = ThetaRow;

  KernelVariant variant;
  KernelParams params;
  Eigen::VectorXd symg_floors; // only read by A-SymG

  struct Parts {
    Eigen::MatrixXd rest;
    Eigen::MatrixXd treat;
  };

  /// The two kernel factors/summands evaluated between row blocks.
  Parts gram_parts(std::span<const ThetaRow> a, std::span<const ThetaRow> b) const {
    const detail::RestBlock ba = detail::make_rest_block(variant, a, symg_floors);
    const detail::RestBlock bb = detail::make_rest_block(variant, b, symg_floors);
    if (ba.means.cols() != bb.means.cols() && a.size() > 0 && b.size() > 0) {
      throw DimensionMismatch("gram: row blocks have different dimensions");
    }
    const Eigen::Index d = ba.means.cols();
    detail::check_params(variant, params, d);
    Parts parts;
    parts.rest.resize(ba.means.rows(), bb.means.rows());
    parts.treat.resize(ba.means.rows(), bb.means.rows());
    const RestForm form = variant.rest_form();
    const double r2 = params.rho * params.rho;
    for (Eigen::Index j = 0; j < bb.means.rows(); ++j) {
      for (Eigen::Index i = 0; i < ba.means.rows(); ++i) {
        double rest = 0.0;
        if (form == RestForm::Prbf) {
          double log_value = 0.0;
          for (Eigen::Index k = 0; k < d; ++k) {
            const double l = params.lengthscales[k];
            const double s = l * l + ba.vars(i, k) + bb.vars(j, k);
            const double diff = ba.means(i, k) - bb.means(j, k);
            log_value += -0.5 * std::log(2.0 * std::numbers::pi * s) - diff * diff / (2.0 * s);
          }
          rest = params.gamma_sq * std::exp(log_value);
        } else if (form == RestForm::Rbf) {
          double sq = 0.0;
          for (Eigen::Index k = 0; k < d; ++k) {
            const double diff = ba.means(i, k) - bb.means(j, k);
            sq += diff * diff;
          }
          rest = params.omega_sq * std::exp(-sq / (2.0 * r2));
        } else {
          double div = 0.0;
          for (Eigen::Index k = 0; k < d; ++k) {
            const double va = ba.vars(i, k);
            const double vb = bb.vars(j, k);
            const double diff = ba.means(i, k) - bb.means(j, k);
            div += va / vb + vb / va + (1.0 / va + 1.0 / vb) * diff * diff - 2.0;
          }
          rest = params.gamma_sq * std::exp(-div / params.symg_a);
        }
        parts.rest(i, j) = rest;
        parts.treat(i, j) =
            detail::treat_value(variant.treat_form(), params, ba.treat[i] - bb.treat[j]);
      }
    }
    return parts;
  }

  Eigen::MatrixXd combine(const Parts &parts) const {
    if (variant.combine() == Combine::Sum) {
      return parts.rest + parts.treat;
    }
    return parts.rest.cwiseProduct(parts.treat);
  }

  Eigen::MatrixXd gram(std::span<const ThetaRow> a, std::span<const ThetaRow> b) const {
    return combine(gram_parts(a, b));
  }

  double operator()(const ThetaRow &a, const ThetaRow &b) const {
    return gram(std::span<const ThetaRow>(&a, 1), std::span<const ThetaRow>(&b, 1))(0, 0);
  }
};

/// K[i,j] = variant kernel(rows_a[i], rows_b[j]).
inline Eigen::MatrixXd gram(const KernelVariant &variant, const KernelParams &params,
                            std::span<const ThetaRow> rows_a, std::span<const ThetaRow> rows_b,
                            const Eigen::VectorXd &symg_floors = {}) {
  return VariantKernel{variant, params, symg_floors}.gram(rows_a, rows_b);
}

// ---------------------------------------------------------------------------
// Unconstrained parameterization
// ---------------------------------------------------------------------------

/// Maps the live parameters of a variant to an unconstrained vector:
/// [log gamma][log l_0 .. l_{d-1}][log A][log omega][log rho][log noise_var].
/// gamma and omega are the square roots of gamma_sq and omega_sq.
class ParamLayout {
public:
  ParamLayout(KernelVariant variant, Eigen::Index rest_dim) : variant_(variant), d_(rest_dim) {
    Eigen::Index next = 0;
    if (variant.has_gamma()) {
      gamma_ = next++;
    }
    if (variant.has_lengthscales()) {
      lengthscale_begin_ = next;
      next += d_;
    }
    if (variant.has_symg_a()) {
      symg_a_ = next++;
    }
    if (variant.has_omega()) {
      omega_ = next++;
    }
    rho_ = next++;
    noise_ = next++;
    size_ = next;
  }

  Eigen::Index size() const { return size_; }
  Eigen::Index rest_dim() const { return d_; }
  const KernelVariant &variant() const { return variant_; }
  std::optional<Eigen::Index> gamma() const { return gamma_; }
  std::optional<Eigen::Index> omega() const { return omega_; }
  std::optional<Eigen::Index> symg_a() const { return symg_a_; }
  std::optional<Eigen::Index> lengthscale(Eigen::Index k) const {
    if (!lengthscale_begin_) {
      return std::nullopt;
    }
    return *lengthscale_begin_ + k;
  }
  Eigen::Index rho() const { return rho_; }
  Eigen::Index noise() const { return noise_; }

  Eigen::VectorXd pack(const KernelParams &p) const {
    Eigen::VectorXd u(size_);
    if (gamma_) u[*gamma_] = 0.5 * std::log(p.gamma_sq);
    if (lengthscale_begin_) {
      detail::check_params(variant_, p, d_);
      for (Eigen::Index k = 0; k < d_; ++k) {
        u[*lengthscale_begin_ + k] = std::log(p.lengthscales[k]);
      }
    }
    if (symg_a_) u[*symg_a_] = std::log(p.symg_a);
    if (omega_) u[*omega_] = 0.5 * std::log(p.omega_sq);
    u[rho_] = std::log(p.rho);
    u[noise_] = std::log(p.noise_var);
    return u;
  }

  /// Inverse of pack; fields the variant does not use are copied from `base`.
  KernelParams unpack(const Eigen::VectorXd &u, const KernelParams &base = {}) const {
    require_same_size(static_cast<std::size_t>(u.size()), static_cast<std::size_t>(size_),
                      "ParamLayout::unpack");
    KernelParams p = base;
    if (gamma_) p.gamma_sq = std::exp(2.0 * u[*gamma_]);
    if (lengthscale_begin_) {
      p.lengthscales = u.segment(*lengthscale_begin_, d_).array().exp();
    }
    if (symg_a_) p.symg_a = std::exp(u[*symg_a_]);
    if (omega_) p.omega_sq = std::exp(2.0 * u[*omega_]);
    p.rho = std::exp(u[rho_]);
    p.noise_var = std::exp(u[noise_]);
    return p;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out(static_cast<std::size_t>(size_));
    if (gamma_) out[static_cast<std::size_t>(*gamma_)] = "log_gamma";
    if (lengthscale_begin_) {
      for (Eigen::Index k = 0; k < d_; ++k) {
        out[static_cast<std::size_t>(*lengthscale_begin_ + k)] = "log_l" + std::to_string(k);
      }
    }
    if (symg_a_) out[static_cast<std::size_t>(*symg_a_)] = "log_symg_a";
    if (omega_) out[static_cast<std::size_t>(*omega_)] = "log_omega";
    out[static_cast<std::size_t>(rho_)] = "log_rho";
    out[static_cast<std::size_t>(noise_)] = "log_noise_var";
    return out;
  }

private:
  KernelVariant variant_;
  Eigen::Index d_ = 0;
  std::optional<Eigen::Index> gamma_;
  std::optional<Eigen::Index> lengthscale_begin_;
  std::optional<Eigen::Index> symg_a_;
  std::optional<Eigen::Index> omega_;
  Eigen::Index rho_ = 0;
  Eigen::Index noise_ = 0;
  Eigen::Index size_ = 0;
};

// ---------------------------------------------------------------------------
// Training-set Gram cache with analytic hyperparameter derivatives
// ---------------------------------------------------------------------------

/// Precomputes the parameter-independent pairwise quantities of a training
/// set so that the Gram matrix and the contraction sum(W .* dK/du) can be
/// evaluated repeatedly during optimization. Only the lower triangle is
/// stored; results are symmetric.
class TrainingGram {
public:
  TrainingGram(KernelVariant variant, std::span<const ThetaRow> rows,
               Eigen::VectorXd symg_floors = {})
      : variant_(variant), floors_(std::move(symg_floors)) {
    if (rows.empty()) {
      throw InvalidArgument("TrainingGram: no rows");
    }
    const detail::RestBlock block = detail::make_rest_block(variant_, rows, floors_);
    n_ = block.means.rows();
    d_ = block.means.cols();
    const Eigen::Index pairs = n_ * (n_ + 1) / 2;
    dt2_.resize(pairs);
    const RestForm form = variant_.rest_form();
    if (form == RestForm::Prbf) {
      sq_.resize(pairs, d_);
      vsum_.resize(d_);
      for (Eigen::Index k = 0; k < d_; ++k) {
        if ((block.vars.col(k).array() != 0.0).any()) {
          vsum_[static_cast<std::size_t>(k)].resize(pairs);
        }
      }
    } else {
      pre_.resize(pairs);
    }
    Eigen::Index p = 0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      for (Eigen::Index i = j; i < n_; ++i, ++p) {
        const double dt = block.treat[i] - block.treat[j];
        dt2_[p] = dt * dt;
        if (form == RestForm::Prbf) {
          for (Eigen::Index k = 0; k < d_; ++k) {
            const double diff = block.means(i, k) - block.means(j, k);
            sq_(p, k) = diff * diff;
            if (!vsum_[static_cast<std::size_t>(k)].empty()) {
              vsum_[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)] =
                  block.vars(i, k) + block.vars(j, k);
            }
          }
        } else if (form == RestForm::Rbf) {
          double sq = 0.0;
          for (Eigen::Index k = 0; k < d_; ++k) {
            const double diff = block.means(i, k) - block.means(j, k);
            sq += diff * diff;
          }
          pre_[p] = sq;
        } else {
          double div = 0.0;
          for (Eigen::Index k = 0; k < d_; ++k) {
            const double va = block.vars(i, k);
            const double vb = block.vars(j, k);
            const double diff = block.means(i, k) - block.means(j, k);
            div += va / vb + vb / va + (1.0 / va + 1.0 / vb) * diff * diff - 2.0;
          }
          pre_[p] = div;
        }
      }
    }
  }

  Eigen::Index size() const { return n_; }
  Eigen::Index rest_dim() const { return d_; }
  const KernelVariant &variant() const { return variant_; }
  const Eigen::VectorXd &symg_floors() const { return floors_; }

  /// Off-diagonal SymG divergences (for initializing A).
  std::vector<double> symg_divergences() const {
    std::vector<double> out;
    if (variant_.rest_form() != RestForm::Symg) {
      return out;
    }
    Eigen::Index p = 0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      for (Eigen::Index i = j; i < n_; ++i, ++p) {
        if (i != j) out.push_back(pre_[p]);
      }
    }
    return out;
  }

  struct Evaluation {
    Eigen::VectorXd rest;  // packed lower triangle
    Eigen::VectorXd treat; // packed lower triangle
    Eigen::MatrixXd full;  // dense symmetric, without noise
  };

  Evaluation evaluate(const KernelParams &params) const {
    detail::check_params(variant_, params, d_);
    const Eigen::Index pairs = dt2_.size();
    Evaluation ev;
    ev.rest.resize(pairs);
    ev.treat.resize(pairs);
    ev.full.resize(n_, n_);
    const RestForm form = variant_.rest_form();
    const TreatForm tform = variant_.treat_form();
    const double r2 = params.rho * params.rho;

    // Dimensions without variance contribute a constant normalizer.
    double log_const = 0.0;
    Eigen::VectorXd inv_two_l2;
    if (form == RestForm::Prbf) {
      inv_two_l2.resize(d_);
      for (Eigen::Index k = 0; k < d_; ++k) {
        const double l2 = params.lengthscales[k] * params.lengthscales[k];
        inv_two_l2[k] = 1.0 / (2.0 * l2);
        if (vsum_[static_cast<std::size_t>(k)].empty()) {
          log_const += -0.5 * std::log(2.0 * std::numbers::pi * l2);
        }
      }
    }
    const double treat_scale = tform == TreatForm::ScaledRbf       ? params.omega_sq
                               : tform == TreatForm::NormalDensity ? 1.0 / std::sqrt(2.0 * std::numbers::pi * r2)
                                                                   : 1.0;
    Eigen::Index p = 0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      for (Eigen::Index i = j; i < n_; ++i, ++p) {
        double rest;
        if (form == RestForm::Prbf) {
          double log_value = log_const;
          for (Eigen::Index k = 0; k < d_; ++k) {
            const auto &vs = vsum_[static_cast<std::size_t>(k)];
            if (vs.empty()) {
              log_value -= sq_(p, k) * inv_two_l2[k];
            } else {
              const double l = params.lengthscales[k];
              const double s = l * l + vs[static_cast<std::size_t>(p)];
              log_value += -0.5 * std::log(2.0 * std::numbers::pi * s) - sq_(p, k) / (2.0 * s);
            }
          }
          rest = params.gamma_sq * std::exp(log_value);
        } else if (form == RestForm::Rbf) {
          rest = params.omega_sq * std::exp(-pre_[p] / (2.0 * r2));
        } else {
          rest = params.gamma_sq * std::exp(-pre_[p] / params.symg_a);
        }
        const double treat = treat_scale * std::exp(-dt2_[p] / (2.0 * r2));
        ev.rest[p] = rest;
        ev.treat[p] = treat;
        const double k = variant_.combine() == Combine::Sum ? rest + treat : rest * treat;
        ev.full(i, j) = k;
        ev.full(j, i) = k;
      }
    }
    return ev;
  }

  /// g[u] = 1/2 sum_ij W_ij dK_ij/du for every kernel parameter in `layout`
  /// (the noise entry is left at 0).
  Eigen::VectorXd contract(const KernelParams &params, const Evaluation &ev,
                           const Eigen::MatrixXd &w, const ParamLayout &layout) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(layout.size());
    const RestForm form = variant_.rest_form();
    const TreatForm tform = variant_.treat_form();
    const bool sum = variant_.combine() == Combine::Sum;
    const double r2 = params.rho * params.rho;
    Eigen::VectorXd l2(d_);
    if (form == RestForm::Prbf) {
      for (Eigen::Index k = 0; k < d_; ++k) {
        l2[k] = params.lengthscales[k] * params.lengthscales[k];
      }
    }
    double g_gamma = 0.0, g_omega = 0.0, g_rho = 0.0, g_a = 0.0;
    Eigen::VectorXd g_l = Eigen::VectorXd::Zero(d_);
    Eigen::Index p = 0;
    for (Eigen::Index j = 0; j < n_; ++j) {
      for (Eigen::Index i = j; i < n_; ++i, ++p) {
        const double weight = 0.5 * w(i, j) * (i == j ? 1.0 : 2.0);
        if (weight == 0.0) {
          continue;
        }
        const double rest = ev.rest[p];
        const double treat = ev.treat[p];
        // d(full)/d(rest-param) = factor * d(rest)/d(param)
        const double rest_factor = sum ? weight : weight * treat;
        const double treat_factor = sum ? weight : weight * rest;
        const double t_ratio = dt2_[p] / r2;

        if (form == RestForm::Prbf) {
          g_gamma += rest_factor * 2.0 * rest;
          for (Eigen::Index k = 0; k < d_; ++k) {
            const auto &vs = vsum_[static_cast<std::size_t>(k)];
            const double s = vs.empty() ? l2[k] : l2[k] + vs[static_cast<std::size_t>(p)];
            g_l[k] += rest_factor * rest * l2[k] * (sq_(p, k) / (s * s) - 1.0 / s);
          }
        } else if (form == RestForm::Rbf) {
          g_omega += rest_factor * 2.0 * rest;
          g_rho += rest_factor * rest * pre_[p] / r2;
        } else {
          g_gamma += rest_factor * 2.0 * rest;
          g_a += rest_factor * rest * pre_[p] / params.symg_a;
        }

        switch (tform) {
        case TreatForm::ScaledRbf:
          g_omega += treat_factor * 2.0 * treat;
          g_rho += treat_factor * treat * t_ratio;
          break;
        case TreatForm::NormalDensity:
          g_rho += treat_factor * treat * (t_ratio - 1.0);
          break;
        case TreatForm::UnitRbf:
          g_rho += treat_factor * treat * t_ratio;
          break;
        }
      }
    }
    if (layout.gamma()) g[*layout.gamma()] = g_gamma;
    if (layout.omega()) g[*layout.omega()] = g_omega;
    if (layout.symg_a()) g[*layout.symg_a()] = g_a;
    for (Eigen::Index k = 0; k < d_; ++k) {
      if (auto idx = layout.lengthscale(k)) g[*idx] = g_l[k];
    }
    g[layout.rho()] = g_rho;
    return g;
  }

private:
  KernelVariant variant_;
  Eigen::VectorXd floors_;
  Eigen::Index n_ = 0;
  Eigen::Index d_ = 0;
  Eigen::VectorXd dt2_;
  Eigen::MatrixXd sq_;                      // PRBF: per-dimension squared differences
  std::vector<std::vector<double>> vsum_;   // PRBF: summed variances, empty if all zero
  Eigen::VectorXd pre_;                     // RBF: squared distance; SymG: divergence
};

// ---------------------------------------------------------------------------
// Kernels over plain vectors (propensity model)
// ---------------------------------------------------------------------------

enum class VectorKernelFamily { MaternHalf, Rbf };

inline std::string_view to_string(VectorKernelFamily family) {
  return family == VectorKernelFamily::MaternHalf ? "matern-1/2" : "rbf";
}

inline VectorKernelFamily parse_vector_kernel_family(std::string_view name) {
  if (name == "matern-1/2" || name == "matern12" || name == "matern") {
    return VectorKernelFamily::MaternHalf;
  }
  if (name == "rbf") {
    return VectorKernelFamily::Rbf;
  }
  throw InvalidArgument("unknown propensity kernel '" + std::string(name) +
                        "'; valid kernels: matern-1/2, rbf");
}

/// scale * exp(-r / l) (Matern-1/2) or scale * exp(-r^2 / 2 l^2) (RBF).
struct VectorKernel {
  using input_type = Eigen::VectorXd;

  VectorKernelFamily family = VectorKernelFamily::MaternHalf;
  double scale = 1.0;
  double lengthscale = 1.0;

  double from_distance(double r) const {
    if (family == VectorKernelFamily::MaternHalf) {
      return scale * std::exp(-r / lengthscale);
    }
    return scale * std::exp(-(r * r) / (2.0 * lengthscale * lengthscale));
  }

  double operator()(const Eigen::VectorXd &a, const Eigen::VectorXd &b) const {
    require_same_size(static_cast<std::size_t>(a.size()), static_cast<std::size_t>(b.size()),
                      "VectorKernel");
    return from_distance((a - b).norm());
  }

  Eigen::MatrixXd gram(std::span<const Eigen::VectorXd> a,
                       std::span<const Eigen::VectorXd> b) const {
    Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t j = 0; j < b.size(); ++j) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(a[i], b[j]);
      }
    }
    return k;
  }
};

} // namespace drgp

#endif // DRGP_KERNELS_HPP
