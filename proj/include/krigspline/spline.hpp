#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"
#include "krigspline/linalg.hpp"

namespace krigspline {

/// Thin-plate kernel e(h) = h^2 log(h^2) / (16 pi), with e(0) = 0.
inline double tps_kernel(double h) {
  if (h <= 0.0) return 0.0;
  const double h2 = h * h;
  return h2 * std::log(h2) / (16.0 * std::numbers::pi);
}

/// The thin-plate kernel viewed as a generalized covariance of a smoothing
/// problem with n observations: off-diagonal entries e(h), diagonal n*alpha.
struct TpsGeneralizedCovariance {
  double ridge = 0.0;  ///< n * alpha

  double operator()(double h) const { return tps_kernel(h); }
  double diagonal() const { return ridge; }
};

namespace detail {

inline Eigen::MatrixXd tps_kernel_matrix(std::span<const Site> sites) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double e = tps_kernel(distance(sites[static_cast<std::size_t>(i)],
                                           sites[static_cast<std::size_t>(j)]));
      K(i, j) = e;
      K(j, i) = e;
    }
  return K;
}

inline Eigen::MatrixXd plane_design(std::span<const Site> sites) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(sites.size()), 3);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    X(r, 1) = sites[i].x;
    X(r, 2) = sites[i].y;
  }
  return X;
}

/// Null-space parametrization of the spline system: with X = [Q1 Q2] [R; 0],
/// b = Q2 gamma for some gamma, so the constraint X'b = 0 holds by
/// construction and only the reduced matrix Q2' K Q2 needs to be factorized.
struct TpsNullSpace {
  Eigen::MatrixXd K;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Q1;
  Eigen::MatrixXd Q2;
  Eigen::Matrix3d R;
  Eigen::MatrixXd reduced;  ///< Q2' K Q2
};

inline TpsNullSpace tps_null_space(const Observations& obs) {
  if (obs.size() < 3) throw InvalidArgument("fit_tps: need at least 3 sites");
  TpsNullSpace ns;
  ns.X = plane_design(obs.sites());
  if (!full_column_rank(ns.X))
    throw CollinearSites("fit_tps: sites are collinear; plane part is not identifiable");
  ns.K = tps_kernel_matrix(obs.sites());
  const auto n = ns.X.rows();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ns.X);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  ns.Q1 = Q.leftCols(3);
  ns.Q2 = Q.rightCols(n - 3);
  ns.R = qr.matrixQR().topLeftCorner(3, 3).triangularView<Eigen::Upper>();
  ns.reduced = ns.Q2.transpose() * ns.K * ns.Q2;
  return ns;
}

}  // namespace detail

/// Smoothing thin-plate spline Z_hat(t) = a0 + a1 x + a2 y + sum_i b_i e(t - t_i),
/// where (b, a) solve K_alpha b + X a = Z, X'b = 0 with K_alpha = K + n alpha I.
struct TpsFit {
  Observations obs;
  double alpha = 0.0;
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::VectorXd b;

  double ridge() const { return static_cast<double>(obs.size()) * alpha; }
};

inline TpsFit fit_tps(const Observations& obs, double alpha) {
  detail::require(std::isfinite(alpha) && alpha >= 0.0, "fit_tps: alpha must be >= 0");
  const auto ns = detail::tps_null_space(obs);
  const auto n = ns.X.rows();
  const double ridge = static_cast<double>(n) * alpha;
  const Eigen::VectorXd Z = to_vector(obs.values());

  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  if (n > 3) {
    Eigen::MatrixXd M = ns.reduced;
    M.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    const double rc = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
    if (!(rc >= kRcondGate))
      throw IllConditioned("fit_tps: spline system is ill-conditioned (rcond " +
                               std::to_string(rc) + ")",
                           rc);
    b = ns.Q2 * ldlt.solve(ns.Q2.transpose() * Z);
  }
  const Eigen::VectorXd rest = Z - ns.K * b - ridge * b;
  Eigen::Vector3d a = ns.R.triangularView<Eigen::Upper>().solve(ns.Q1.transpose() * rest);
  return TpsFit{obs, alpha, a, std::move(b)};
}

/// Evaluate the fitted spline at t0; O(n).
inline double predict_tps(const TpsFit& fit, const Site& t0) {
  double value = fit.a(0) + fit.a(1) * t0.x + fit.a(2) * t0.y;
  const auto sites = fit.obs.sites();
  for (std::size_t i = 0; i < sites.size(); ++i)
    value += fit.b(static_cast<Eigen::Index>(i)) * tps_kernel(distance(t0, sites[i]));
  return value;
}

/// Bending-energy penalty of the fit in closed form, b'Kb (clamped at zero).
inline double roughness(const TpsFit& fit) {
  const Eigen::MatrixXd K = detail::tps_kernel_matrix(fit.obs.sites());
  return std::max(0.0, fit.b.dot(K * fit.b));
}

/// Penalized sum of squares S = sum_i (Z_i - g(t_i))^2 + alpha * b'Kb.
inline double penalized_sum_of_squares(const TpsFit& fit) {
  double rss = 0.0;
  for (std::size_t i = 0; i < fit.obs.size(); ++i) {
    // fitted value excludes the n*alpha*b_i ridge term
    const double r = fit.obs.value(i) - predict_tps(fit, fit.obs.site(i));
    rss += r * r;
  }
  return rss + fit.alpha * roughness(fit);
}

/// Influence (hat) matrix A(alpha): fitted values at the data sites are A Z.
/// Computed as I - n alpha Q2 (Q2'K Q2 + n alpha I)^-1 Q2'.
inline Eigen::MatrixXd tps_influence_matrix(const Observations& obs, double alpha) {
  const auto ns = detail::tps_null_space(obs);
  const auto n = ns.X.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  if (n == 3 || alpha == 0.0) return A;
  const double ridge = static_cast<double>(n) * alpha;
  Eigen::MatrixXd M = ns.reduced;
  M.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  A -= ridge * ns.Q2 * ldlt.solve(ns.Q2.transpose());
  return A;
}

struct AlphaSelection {
  double alpha = 0.0;
  std::vector<double> grid;
  /// GCV score per candidate; empty when the candidate's system failed.
  std::vector<std::optional<double>> scores;
};

/// 40 log-spaced values over [1e-6 s, 1e4 s], s = sample variance of Z
/// (1 when the data are constant).
inline std::vector<double> default_alpha_grid(const Observations& obs) {
  const auto v = obs.values();
  double mean = 0.0;
  for (double z : v) mean += z;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double z : v) var += (z - mean) * (z - mean);
  var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
  const double s = var > 0.0 ? var : 1.0;
  constexpr std::size_t count = 40;
  const double lo = std::log10(1e-6 * s), hi = std::log10(1e4 * s);
  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k)
    grid[k] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(k) /
                                      static_cast<double>(count - 1));
  return grid;
}

/// Generalized cross-validation choice of alpha:
///   GCV(alpha) = n ||(I - A) Z||^2 / trace(I - A)^2,
/// minimized over the grid; ties within 1e-12 go to the smallest alpha.
/// Scores are exact: Q2'KQ2 is diagonalized once and every candidate is
/// evaluated from its spectrum.
inline AlphaSelection select_alpha_gcv(const Observations& obs,
                                       std::optional<std::vector<double>> grid = std::nullopt) {
  detail::require(obs.size() >= 5, "select_alpha_gcv: need at least 5 observations");
  AlphaSelection sel;
  sel.grid = grid ? std::move(*grid) : default_alpha_grid(obs);
  detail::require(!sel.grid.empty(), "select_alpha_gcv: empty grid");
  for (double a : sel.grid)
    detail::require(std::isfinite(a) && a > 0.0, "select_alpha_gcv: grid values must be positive");

  const auto ns = detail::tps_null_space(obs);
  const auto n = static_cast<double>(obs.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ns.reduced);
  const Eigen::VectorXd d = eig.eigenvalues();
  const Eigen::VectorXd w = eig.eigenvectors().transpose() *
                            (ns.Q2.transpose() * to_vector(obs.values()));

  sel.scores.reserve(sel.grid.size());
  for (double alpha : sel.grid) {
    const Eigen::ArrayXd shifted = d.array() + n * alpha;
    const double lo = shifted.minCoeff(), hi = shifted.maxCoeff();
    if (!(lo > 0.0) || lo / hi < kRcondGate) {
      sel.scores.emplace_back(std::nullopt);
      continue;
    }
    // (I - A) Z = n alpha b with b = Q2 U diag(1/shifted) w; trace(I - A) =
    // n alpha sum(1/shifted). The n alpha factors cancel in the ratio.
    const double resid2 = (w.array() / shifted).square().sum();
    const double trace = shifted.inverse().sum();
    sel.scores.emplace_back(n * resid2 / (trace * trace));
  }

  std::optional<double> best;
  for (const auto& s : sel.scores)
    if (s && (!best || *s < *best)) best = *s;
  if (!best) throw IllConditioned("select_alpha_gcv: every candidate failed", 0.0);
  const double tie = 1e-12 * std::max(1.0, std::abs(*best));
  std::optional<double> chosen;
  for (std::size_t k = 0; k < sel.grid.size(); ++k)
    if (sel.scores[k] && *sel.scores[k] <= *best + tie &&
        (!chosen || sel.grid[k] < *chosen))
      chosen = sel.grid[k];
  sel.alpha = *chosen;
  return sel;
}

}  // namespace krigspline
