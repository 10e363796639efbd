#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"
#include "krigspline/linalg.hpp"
#include "krigspline/variogram.hpp"

namespace krigspline {

/// An isotropic (generalized) covariance: `cov(h)` for the covariance between
/// two sites a distance h apart, `cov.diagonal()` for the entry used on the
/// diagonal of the data matrix (the variance of a single observation).
template <class C>
concept CovarianceModel = requires(const C& c, double h) {
  { c(h) } -> std::convertible_to<double>;
  { c.diagonal() } -> std::convertible_to<double>;
};

/// Drift functions f_0..f_p: degree 0 is the constant (ordinary kriging),
/// degree 1 is (1, x, y) (universal kriging with a planar trend).
class DriftBasis {
public:
  explicit DriftBasis(int degree = 0) : degree_(degree) {
    detail::require(degree == 0 || degree == 1, "drift degree must be 0 or 1");
  }

  int degree() const noexcept { return degree_; }
  /// Number of non-constant functions.
  std::size_t p() const noexcept { return degree_ == 0 ? 0 : 2; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(p() + 1); }

  Eigen::VectorXd evaluate(const Site& s) const {
    Eigen::VectorXd f(size());
    f(0) = 1.0;
    if (degree_ == 1) {
      f(1) = s.x;
      f(2) = s.y;
    }
    return f;
  }

  Eigen::MatrixXd design(std::span<const Site> sites) const {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(sites.size()), size());
    for (std::size_t i = 0; i < sites.size(); ++i)
      X.row(static_cast<Eigen::Index>(i)) = evaluate(sites[i]).transpose();
    return X;
  }

private:
  int degree_;
};

/// Data covariance matrix Sigma (n x n) with entries cov(|t_i - t_j|) and
/// cov.diagonal() on the diagonal.
template <CovarianceModel Cov>
Eigen::MatrixXd covariance_matrix(std::span<const Site> sites, const Cov& cov) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd S(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    S(i, i) = cov.diagonal();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = cov(distance(sites[static_cast<std::size_t>(i)],
                                    sites[static_cast<std::size_t>(j)]));
      S(i, j) = c;
      S(j, i) = c;
    }
  }
  return S;
}

/// Cross-covariance vector C_i = cov(|t0 - t_i|).
template <CovarianceModel Cov>
Eigen::VectorXd cross_covariance(std::span<const Site> sites, const Site& t0,
                                 const Cov& cov) {
  Eigen::VectorXd C(static_cast<Eigen::Index>(sites.size()));
  for (std::size_t i = 0; i < sites.size(); ++i)
    C(static_cast<Eigen::Index>(i)) = cov(distance(t0, sites[i]));
  return C;
}

/// Assembled kriging system for one data set, covariance and drift. Holds the
/// bordered factorization used by the dual and bordered predictors and the
/// factorization of Sigma alone used by the primal formulas. Immutable after
/// construction.
template <CovarianceModel Cov>
class KrigingSystem {
public:
  KrigingSystem(Observations obs, Cov model, DriftBasis basis)
      : obs_(std::move(obs)), model_(std::move(model)), basis_(basis) {
    const auto n = obs_.size();
    detail::require(n >= basis_.p() + 1,
                    "assemble_system: need at least p+1 observations");
    Sigma_ = covariance_matrix(obs_.sites(), model_);
    X_ = basis_.design(obs_.sites());
    if (basis_.degree() > 0 && !detail::full_column_rank(X_))
      throw RankDeficientDrift(
          "assemble_system: sites are collinear; planar drift is not identifiable");
    bordered_ = BorderedSolver(Sigma_, X_);
    Z_ = to_vector(obs_.values());
    factor_primal();
  }

  const Observations& observations() const noexcept { return obs_; }
  const Cov& model() const noexcept { return model_; }
  const DriftBasis& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& Sigma() const noexcept { return Sigma_; }
  const Eigen::MatrixXd& X() const noexcept { return X_; }
  const Eigen::VectorXd& Z() const noexcept { return Z_; }
  const BorderedSolver& bordered() const noexcept { return bordered_; }
  double rcond() const noexcept { return bordered_.rcond(); }

  /// Quantities of the primal (weights) formulation: Sigma^-1 X and
  /// (X' Sigma^-1 X).
  struct Primal {
    Eigen::LDLT<Eigen::MatrixXd> sigma;
    Eigen::MatrixXd sigma_inv_X;
    Eigen::MatrixXd XtSiX;
    Eigen::FullPivLU<Eigen::MatrixXd> XtSiX_lu;
  };

  /// Throws IllConditioned when Sigma itself could not be factorized (as
  /// happens for generalized covariances, which are only conditionally
  /// positive definite).
  const Primal& primal() const {
    if (!primal_) throw IllConditioned(primal_error_, primal_rcond_);
    return *primal_;
  }

private:
  Observations obs_;
  Cov model_;
  DriftBasis basis_;
  Eigen::MatrixXd Sigma_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd Z_;
  BorderedSolver bordered_;
  std::optional<Primal> primal_;
  std::string primal_error_;
  double primal_rcond_ = 0.0;

  void factor_primal() {
    Primal p;
    p.sigma.compute(Sigma_);
    const double rc = p.sigma.info() == Eigen::Success ? p.sigma.rcond() : 0.0;
    if (!(rc >= kRcondGate)) {
      primal_error_ = "covariance matrix is ill-conditioned (rcond " +
                      std::to_string(rc) + ")";
      primal_rcond_ = rc;
      return;
    }
    p.sigma_inv_X = p.sigma.solve(X_);
    p.XtSiX = X_.transpose() * p.sigma_inv_X;
    p.XtSiX_lu.compute(p.XtSiX);
    if (!p.XtSiX_lu.isInvertible()) {
      primal_error_ = "X' Sigma^-1 X is singular";
      return;
    }
    primal_ = std::move(p);
  }
};

template <CovarianceModel Cov>
KrigingSystem<Cov> assemble_system(Observations obs, Cov model, DriftBasis basis) {
  return KrigingSystem<Cov>(std::move(obs), std::move(model), basis);
}

struct KrigingPrediction {
  double value = 0.0;
  double variance = 0.0;
  std::optional<Eigen::VectorXd> weights;   ///< lambda
  std::optional<Eigen::VectorXd> lagrange;  ///< m_0..m_p
};

namespace detail {
inline double clamp_variance(double v) { return v < 0.0 ? 0.0 : v; }
}  // namespace detail

/// Universal kriging through the explicit weight formula
///   lambda = Sigma^-1 [C + X (X'Sigma^-1 X)^-1 (x - X'Sigma^-1 C)]
/// with variance
///   c(0) - C'Sigma^-1 C + (x - X'Sigma^-1 C)'(X'Sigma^-1 X)^-1 (x - X'Sigma^-1 C).
/// Negative round-off in the variance is clamped to zero.
template <CovarianceModel Cov>
KrigingPrediction predict_primal(const KrigingSystem<Cov>& sys, const Site& t0) {
  const auto& p = sys.primal();
  const Eigen::VectorXd C = cross_covariance(sys.observations().sites(), t0, sys.model());
  const Eigen::VectorXd x = sys.basis().evaluate(t0);
  const Eigen::VectorXd si_C = p.sigma.solve(C);
  const Eigen::VectorXd r = x - sys.X().transpose() * si_C;
  const Eigen::VectorXd m = p.XtSiX_lu.solve(r);
  Eigen::VectorXd lambda = si_C + p.sigma_inv_X * m;

  KrigingPrediction out;
  out.value = lambda.dot(sys.Z());
  out.variance = detail::clamp_variance(sys.model().diagonal() - C.dot(si_C) + r.dot(m));
  out.weights = std::move(lambda);
  out.lagrange = m;
  return out;
}

/// Same predictor obtained from one solve of the bordered system
///   [Sigma X; X' 0] [lambda; -m] = [C; x],
/// with variance c(0) - lambda'C + m'x. Valid for generalized covariances,
/// where Sigma alone need not be invertible.
template <CovarianceModel Cov>
KrigingPrediction predict_bordered(const KrigingSystem<Cov>& sys, const Site& t0) {
  const auto n = static_cast<Eigen::Index>(sys.observations().size());
  const auto m = sys.basis().size();
  Eigen::VectorXd rhs(n + m);
  rhs.head(n) = cross_covariance(sys.observations().sites(), t0, sys.model());
  rhs.tail(m) = sys.basis().evaluate(t0);
  const Eigen::VectorXd sol = sys.bordered().solve(rhs);

  KrigingPrediction out;
  Eigen::VectorXd lambda = sol.head(n);
  Eigen::VectorXd lagrange = -sol.tail(m);
  out.value = lambda.dot(sys.Z());
  out.variance = detail::clamp_variance(sys.model().diagonal() -
                                        lambda.dot(rhs.head(n)) +
                                        lagrange.dot(rhs.tail(m)));
  out.weights = std::move(lambda);
  out.lagrange = std::move(lagrange);
  return out;
}

/// Solution (V1, V2) of the dual system Sigma V1 + X V2 = Z, X'V1 = 0.
template <CovarianceModel Cov>
struct DualKrigingFit {
  KrigingSystem<Cov> system;
  Eigen::VectorXd V1;
  Eigen::VectorXd V2;
};

template <CovarianceModel Cov>
DualKrigingFit<Cov> fit_dual(KrigingSystem<Cov> sys) {
  const auto n = static_cast<Eigen::Index>(sys.observations().size());
  const auto m = sys.basis().size();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.head(n) = sys.Z();
  const Eigen::VectorXd sol = sys.bordered().solve(rhs);
  return {std::move(sys), sol.head(n), sol.tail(m)};
}

/// Z_hat(t0) = V1'C + V2'x; O(n) per site.
template <CovarianceModel Cov>
double predict_dual(const DualKrigingFit<Cov>& fit, const Site& t0) {
  const auto sites = fit.system.observations().sites();
  const auto& cov = fit.system.model();
  double value = fit.V2.dot(fit.system.basis().evaluate(t0));
  for (std::size_t i = 0; i < sites.size(); ++i)
    value += fit.V1(static_cast<Eigen::Index>(i)) * cov(distance(t0, sites[i]));
  return value;
}

/// Leave-one-out prediction and variance at every data site from a single
/// factorization: with M the bordered matrix and V = M^-1 [Z; 0],
///   Z_j - Z_hat_{-j}(t_j) = V_j / (M^-1)_jj,   sigma^2_{-j} = 1 / (M^-1)_jj.
/// Matches refitting on n-1 sites with the covariance held fixed.
struct LooFastResult {
  std::vector<double> prediction;
  std::vector<double> variance;
};

template <CovarianceModel Cov>
LooFastResult loo_from_full_fit(const DualKrigingFit<Cov>& fit) {
  const auto& sys = fit.system;
  const auto n = static_cast<Eigen::Index>(sys.observations().size());
  LooFastResult out;
  out.prediction.resize(static_cast<std::size_t>(n));
  out.variance.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = sys.bordered().inverse_diagonal(j);
    const auto k = static_cast<std::size_t>(j);
    out.prediction[k] = sys.Z()(j) - fit.V1(j) / d;
    out.variance[k] = d > 0.0 ? 1.0 / d : 0.0;
  }
  return out;
}

}  // namespace krigspline
