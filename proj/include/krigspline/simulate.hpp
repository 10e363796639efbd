#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"
#include "krigspline/kriging.hpp"
#include "krigspline/variogram.hpp"

namespace krigspline {

/// Identity of the pinned generator, recorded in output metadata.
inline constexpr std::string_view kGeneratorName = "mt19937_64/box-muller-53bit";

/// Standard normal draws with a fully specified algorithm: std::mt19937_64
/// (bit-exact across standard libraries) feeding a 53-bit uniform and the
/// Box-Muller transform. std::normal_distribution is avoided because its
/// algorithm is implementation-defined.
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // (0, 1): never returns exactly zero
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double operator()() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = uniform(), u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct FieldSpec {
  GaussianCovariogram model;
  std::optional<std::array<double, 3>> trend;  ///< beta0 + beta1 x + beta2 y
  std::uint64_t seed = 0;
};

/// Largest diagonal jitter, relative to c(0), tolerated before giving up.
inline constexpr double kSimulationJitter = 1e-10;

/// Draw Z = mu + L w with L L' = Sigma and w standard normal. L is the
/// Cholesky factor when Sigma is numerically positive definite, otherwise
/// the symmetric square root with eigenvalues down to -jitter clamped to zero.
inline Observations simulate_field(const FieldSpec& spec, const std::vector<Site>& sites) {
  detail::require(!sites.empty(), "simulate_field: no sites");
  detail::require(sites.size() <= 2000, "simulate_field: at most 2000 sites");
  // validates distinctness before the O(n^3) work
  const Observations layout(sites, std::vector<double>(sites.size(), 0.0));

  const auto n = static_cast<Eigen::Index>(sites.size());
  const Eigen::MatrixXd Sigma = covariance_matrix(layout.sites(), spec.model);
  NormalStream normal(spec.seed);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = normal();

  Eigen::VectorXd z;
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() == Eigen::Success) {
    z = llt.matrixL() * w;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Sigma);
    if (eig.info() != Eigen::Success)
      throw NotPositiveDefinite("simulate_field: eigendecomposition failed");
    Eigen::VectorXd lambda = eig.eigenvalues();
    const double budget = kSimulationJitter * spec.model.sill();
    if (lambda.minCoeff() < -budget)
      throw NotPositiveDefinite(
          "simulate_field: covariance matrix is indefinite beyond the jitter budget");
    lambda = lambda.cwiseMax(0.0).cwiseSqrt();
    z = eig.eigenvectors() * (lambda.asDiagonal() * (eig.eigenvectors().transpose() * w));
  }

  std::vector<double> values(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    double mu = 0.0;
    if (spec.trend) {
      const auto& b = *spec.trend;
      mu = b[0] + b[1] * sites[i].x + b[2] * sites[i].y;
    }
    values[i] = mu + z(static_cast<Eigen::Index>(i));
  }
  return layout.with_values(std::move(values));
}

/// n sites drawn uniformly in a box from the same pinned generator.
inline std::vector<Site> random_sites(std::size_t n, const BoundingBox& box,
                                      std::uint64_t seed) {
  NormalStream stream(seed);
  std::vector<Site> out;
  out.reserve(n);
  while (out.size() < n) {
    const Site s{box.x_min + (box.x_max - box.x_min) * stream.uniform(),
                 box.y_min + (box.y_max - box.y_min) * stream.uniform()};
    bool clash = false;
    for (const auto& t : out) clash = clash || distance(s, t) < kDuplicateTolerance;
    if (!clash) out.push_back(s);
  }
  return out;
}

}  // namespace krigspline
