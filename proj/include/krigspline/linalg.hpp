#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"

namespace krigspline {

/// Systems whose reciprocal condition estimate falls below this are refused.
inline constexpr double kRcondGate = 1e-14;

namespace detail {

/// True when the columns of `X` are linearly independent. Columns after the
/// first are centered and scaled before the singular-value test so that
/// coordinates far from the origin do not mask a collinear configuration.
inline bool full_column_rank(const Eigen::MatrixXd& X) {
  if (X.rows() < X.cols()) return false;
  Eigen::MatrixXd Y = X;
  for (Eigen::Index k = 1; k < Y.cols(); ++k) {
    Y.col(k).array() -= Y.col(k).mean();
    const double scale = Y.col(k).cwiseAbs().maxCoeff();
    if (scale == 0.0) return false;
    Y.col(k) /= scale;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > 1e-10 * s(0);
}

}  // namespace detail

/// LU factorization of the symmetric bordered matrix
///
///     [ A   X ]
///     [ X'  0 ]
///
/// with A (n x n) and X (n x m). The matrix is equilibrated by a symmetric
/// diagonal scaling before factorization; `rcond()` reports the reciprocal
/// 1-norm condition estimate of the scaled matrix.
class BorderedSolver {
public:
  BorderedSolver() = default;

  BorderedSolver(const Eigen::MatrixXd& A, const Eigen::MatrixXd& X)
      : n_(A.rows()), m_(X.cols()) {
    detail::require(A.rows() == A.cols() && X.rows() == A.rows(),
                    "bordered system: shape mismatch");
    const Eigen::Index N = n_ + m_;
    const double a_scale = A.cwiseAbs().maxCoeff();
    const double s = a_scale > 0.0 ? 1.0 / std::sqrt(a_scale) : 1.0;
    scale_.resize(N);
    scale_.head(n_).setConstant(s);
    for (Eigen::Index k = 0; k < m_; ++k) {
      const double c = X.col(k).cwiseAbs().maxCoeff();
      scale_(n_ + k) = c > 0.0 ? 1.0 / (s * c) : 1.0;
    }

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
    M.topLeftCorner(n_, n_) = A;
    M.topRightCorner(n_, m_) = X;
    M.bottomLeftCorner(m_, n_) = X.transpose();
    M = scale_.asDiagonal() * M * scale_.asDiagonal();
    lu_.compute(M);
    rcond_ = lu_.rcond();
    if (!(rcond_ >= kRcondGate))
      throw IllConditioned("bordered system is ill-conditioned (rcond " +
                               std::to_string(rcond_) + ")",
                           rcond_);
  }

  Eigen::Index n() const noexcept { return n_; }
  Eigen::Index m() const noexcept { return m_; }
  double rcond() const noexcept { return rcond_; }

  /// Solve M [u; v] = [top; bottom].
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    const Eigen::VectorXd y = lu_.solve(scale_.asDiagonal() * rhs);
    return scale_.asDiagonal() * y;
  }

  /// Diagonal entry (M^-1)_{kk} of the unscaled inverse.
  double inverse_diagonal(Eigen::Index k) const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n_ + m_);
    e(k) = 1.0;
    return solve(e)(k);
  }

private:
  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;
  Eigen::VectorXd scale_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double rcond_ = 0.0;
};

inline Eigen::VectorXd to_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

}  // namespace krigspline
