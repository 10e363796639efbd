#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "krigspline/errors.hpp"

namespace krigspline {

/// A point in the plane. Coordinates are treated as planar Euclidean.
struct Site {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Site&, const Site&) = default;
};

inline bool is_finite(const Site& s) {
  return std::isfinite(s.x) && std::isfinite(s.y);
}

inline double distance(const Site& a, const Site& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Sites closer than this are considered the same location.
inline constexpr double kDuplicateTolerance = 1e-12;

enum class DuplicatePolicy {
  reject,   ///< throw DuplicateSite
  average,  ///< collapse to the first occurrence carrying the mean value
};

/// Scattered observations Z(t_1..t_n). Immutable once built; every site is
/// finite and distinct.
class Observations {
public:
  Observations(std::vector<Site> sites, std::vector<double> values,
               DuplicatePolicy policy = DuplicatePolicy::reject) {
    detail::require(!sites.empty(), "observations: need at least one site");
    detail::require(sites.size() == values.size(),
                    "observations: sites and values differ in length");
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (!is_finite(sites[i]))
        throw InvalidArgument("observations: site " + std::to_string(i) +
                              " has a non-finite coordinate");
      if (!std::isfinite(values[i]))
        throw InvalidArgument("observations: value " + std::to_string(i) +
                              " is not finite");
    }

    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      std::size_t match = sites_.size();
      for (std::size_t k = 0; k < sites_.size(); ++k) {
        if (distance(sites[i], sites_[k]) < kDuplicateTolerance) {
          match = k;
          break;
        }
      }
      if (match == sites_.size()) {
        sites_.push_back(sites[i]);
        values_.push_back(values[i]);
        counts.push_back(1);
      } else {
        if (policy == DuplicatePolicy::reject)
          throw DuplicateSite("observations: site " + std::to_string(i) +
                              " duplicates site " + std::to_string(match));
        values_[match] += values[i];
        ++counts[match];
      }
    }
    for (std::size_t k = 0; k < values_.size(); ++k)
      values_[k] /= static_cast<double>(counts[k]);
  }

  std::size_t size() const noexcept { return sites_.size(); }
  std::span<const Site> sites() const noexcept { return sites_; }
  std::span<const double> values() const noexcept { return values_; }
  const Site& site(std::size_t i) const { return sites_[i]; }
  double value(std::size_t i) const { return values_[i]; }

  /// Same sites with new values (length must match).
  Observations with_values(std::vector<double> values) const {
    return Observations(sites_, std::move(values));
  }

  /// Copy with observation `index` removed.
  Observations without(std::size_t index) const {
    detail::require(index < size(), "observations: index out of range");
    detail::require(size() > 1, "observations: cannot remove the only site");
    std::vector<Site> s;
    std::vector<double> v;
    s.reserve(size() - 1);
    v.reserve(size() - 1);
    for (std::size_t i = 0; i < size(); ++i) {
      if (i == index) continue;
      s.push_back(sites_[i]);
      v.push_back(values_[i]);
    }
    return Observations(std::move(s), std::move(v));
  }

private:
  std::vector<Site> sites_;
  std::vector<double> values_;
};

/// Regular prediction grid over [x_min, x_max] x [y_min, y_max].
/// Spacing is (max - min) / (n - 1); an axis with n == 1 sits at its minimum.
struct Grid {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  std::size_t nx = 1;
  std::size_t ny = 1;

  void validate() const {
    detail::require(std::isfinite(x_min) && std::isfinite(x_max) &&
                        std::isfinite(y_min) && std::isfinite(y_max),
                    "grid: bounds must be finite");
    detail::require(nx >= 1 && ny >= 1, "grid: nx and ny must be positive");
    // a single node along an axis only needs an ordered (possibly empty) span
    detail::require(nx == 1 ? x_min <= x_max : x_min < x_max,
                    "grid: x_min must be below x_max");
    detail::require(ny == 1 ? y_min <= y_max : y_min < y_max,
                    "grid: y_min must be below y_max");
  }
};

/// Row-major grid nodes (x varies fastest), corners included.
inline std::vector<Site> grid_sites(const Grid& g) {
  g.validate();
  auto axis = [](double lo, double hi, std::size_t count, std::size_t i) {
    if (count == 1) return lo;
    if (i + 1 == count) return hi;
    return lo + (hi - lo) * static_cast<double>(i) /
                    static_cast<double>(count - 1);
  };
  std::vector<Site> out;
  out.reserve(g.nx * g.ny);
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i)
      out.push_back({axis(g.x_min, g.x_max, g.nx, i),
                     axis(g.y_min, g.y_max, g.ny, j)});
  return out;
}

/// Axis-aligned bounding box of a set of sites.
struct BoundingBox {
  double x_min, x_max, y_min, y_max;
};

inline BoundingBox bounding_box(std::span<const Site> sites) {
  detail::require(!sites.empty(), "bounding_box: no sites");
  BoundingBox b{sites[0].x, sites[0].x, sites[0].y, sites[0].y};
  for (const auto& s : sites) {
    b.x_min = std::min(b.x_min, s.x);
    b.x_max = std::max(b.x_max, s.x);
    b.y_min = std::min(b.y_min, s.y);
    b.y_max = std::max(b.y_max, s.y);
  }
  return b;
}

}  // namespace krigspline
