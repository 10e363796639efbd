#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"

namespace krigspline {

/// R x C table of optional cells. Rows run along y, columns along x; the
/// centers give the coordinate each row/column represents when the fitted
/// effects are extended to arbitrary sites.
class TwoWayTable {
public:
  using Cell = std::optional<double>;

  TwoWayTable(std::vector<std::vector<Cell>> cells,
              std::vector<double> row_centers, std::vector<double> col_centers)
      : cells_(std::move(cells)),
        row_centers_(std::move(row_centers)),
        col_centers_(std::move(col_centers)) {
    const std::size_t r = cells_.size();
    detail::require(r >= 2, "table: need at least two rows");
    const std::size_t c = cells_[0].size();
    detail::require(c >= 2, "table: need at least two columns");
    for (const auto& row : cells_)
      detail::require(row.size() == c, "table: ragged rows");
    detail::require(row_centers_.size() == r && col_centers_.size() == c,
                    "table: center count does not match table shape");
    detail::require(std::is_sorted(row_centers_.begin(), row_centers_.end()) &&
                        std::is_sorted(col_centers_.begin(), col_centers_.end()),
                    "table: centers must be nondecreasing");
    for (std::size_t i = 0; i < r; ++i) {
      if (std::none_of(cells_[i].begin(), cells_[i].end(),
                       [](const Cell& v) { return v.has_value(); }))
        throw EmptyRowOrColumn("table: row " + std::to_string(i) +
                               " has no observations");
    }
    for (std::size_t j = 0; j < c; ++j) {
      bool any = false;
      for (std::size_t i = 0; i < r; ++i) any = any || cells_[i][j].has_value();
      if (!any)
        throw EmptyRowOrColumn("table: column " + std::to_string(j) +
                               " has no observations");
    }
  }

  /// Full table with centers 0..R-1 and 0..C-1.
  static TwoWayTable from_values(
      const std::vector<std::vector<double>>& values) {
    detail::require(!values.empty(), "table: empty");
    std::vector<std::vector<Cell>> cells;
    for (const auto& row : values) cells.emplace_back(row.begin(), row.end());
    std::vector<double> rc(values.size()), cc(values[0].size());
    for (std::size_t i = 0; i < rc.size(); ++i) rc[i] = static_cast<double>(i);
    for (std::size_t j = 0; j < cc.size(); ++j) cc[j] = static_cast<double>(j);
    return TwoWayTable(std::move(cells), std::move(rc), std::move(cc));
  }

  std::size_t rows() const noexcept { return cells_.size(); }
  std::size_t cols() const noexcept { return cells_[0].size(); }
  const Cell& cell(std::size_t i, std::size_t j) const { return cells_[i][j]; }
  const std::vector<std::vector<Cell>>& cells() const noexcept { return cells_; }
  const std::vector<double>& row_centers() const noexcept { return row_centers_; }
  const std::vector<double>& col_centers() const noexcept { return col_centers_; }

private:
  std::vector<std::vector<Cell>> cells_;
  std::vector<double> row_centers_;
  std::vector<double> col_centers_;
};

struct CellIndex {
  std::size_t row = 0;
  std::size_t col = 0;
};

struct BinnedTable {
  TwoWayTable table;
  std::vector<CellIndex> assignment;  ///< cell of each observation, in order
};

/// ceil(sqrt(n/2)) clamped to at least 2.
inline std::size_t default_table_size(std::size_t n) {
  const auto k = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(n) / 2.0)));
  return std::max<std::size_t>(2, k);
}

/// Equal-width binning over the bounding box of the sites. Each cell holds
/// the mean of the observations falling in it.
inline BinnedTable bin_to_table(const Observations& obs, std::size_t rows,
                                std::size_t cols) {
  detail::require(rows >= 2 && cols >= 2, "bin_to_table: rows and cols must be >= 2");
  const auto box = bounding_box(obs.sites());
  auto bin = [](double v, double lo, double hi, std::size_t count) {
    if (!(hi > lo)) return std::size_t{0};
    const double t = (v - lo) / (hi - lo) * static_cast<double>(count);
    const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t)));
    return std::min(k, count - 1);
  };

  std::vector<std::vector<double>> sum(rows, std::vector<double>(cols, 0.0));
  std::vector<std::vector<std::size_t>> count(rows, std::vector<std::size_t>(cols, 0));
  std::vector<double> ysum(rows, 0.0), xsum(cols, 0.0);
  std::vector<std::size_t> ycount(rows, 0), xcount(cols, 0);
  std::vector<CellIndex> assignment;
  assignment.reserve(obs.size());

  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Site& s = obs.site(k);
    const std::size_t i = bin(s.y, box.y_min, box.y_max, rows);
    const std::size_t j = bin(s.x, box.x_min, box.x_max, cols);
    sum[i][j] += obs.value(k);
    ++count[i][j];
    ysum[i] += s.y;
    ++ycount[i];
    xsum[j] += s.x;
    ++xcount[j];
    assignment.push_back({i, j});
  }
  for (std::size_t i = 0; i < rows; ++i)
    if (ycount[i] == 0)
      throw EmptyRowOrColumn("bin_to_table: row " + std::to_string(i) +
                             " received no observations; use fewer rows");
  for (std::size_t j = 0; j < cols; ++j)
    if (xcount[j] == 0)
      throw EmptyRowOrColumn("bin_to_table: column " + std::to_string(j) +
                             " received no observations; use fewer columns");

  std::vector<std::vector<TwoWayTable::Cell>> cells(
      rows, std::vector<TwoWayTable::Cell>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (count[i][j] > 0)
        cells[i][j] = sum[i][j] / static_cast<double>(count[i][j]);

  std::vector<double> rc(rows), cc(cols);
  for (std::size_t i = 0; i < rows; ++i) rc[i] = ysum[i] / static_cast<double>(ycount[i]);
  for (std::size_t j = 0; j < cols; ++j) cc[j] = xsum[j] / static_cast<double>(xcount[j]);
  return {TwoWayTable(std::move(cells), std::move(rc), std::move(cc)),
          std::move(assignment)};
}

namespace detail {

/// Median of a nonempty list; mean of the two middle values for even sizes.
inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty list");
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double hi = *mid;
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

/// Piecewise-linear interpolation through (knots, values), flat outside.
inline double interpolate_clamped(const std::vector<double>& knots,
                                  const std::vector<double>& values, double at) {
  if (at <= knots.front()) return values.front();
  if (at >= knots.back()) return values.back();
  const auto it = std::upper_bound(knots.begin(), knots.end(), at);
  const auto hi = static_cast<std::size_t>(it - knots.begin());
  const std::size_t lo = hi - 1;
  const double span = knots[hi] - knots[lo];
  if (span <= 0.0) return values[hi];
  const double w = (at - knots[lo]) / span;
  return (1.0 - w) * values[lo] + w * values[hi];
}

}  // namespace detail

/// Additive decomposition cell = overall + row + col + residual.
struct MedianPolishFit {
  double overall = 0.0;
  std::vector<double> row_effects;
  std::vector<double> col_effects;
  std::vector<std::vector<std::optional<double>>> residuals;
  std::vector<double> row_centers;
  std::vector<double> col_centers;
  std::size_t iterations = 0;
  bool converged = false;
};

struct MedianPolishOptions {
  double tol = 1e-6;
  std::size_t max_iter = 50;
};

/// Tukey median polish. Each iteration sweeps row medians, then column
/// medians; after each half-sweep the median of the opposite effect vector is
/// moved into the overall term. Stops once the largest median removed in a
/// full iteration is <= tol.
inline MedianPolishFit median_polish(const TwoWayTable& table,
                                     MedianPolishOptions opt = {}) {
  detail::require(opt.tol > 0.0, "median_polish: tol must be positive");
  detail::require(opt.max_iter >= 1, "median_polish: max_iter must be >= 1");
  const std::size_t R = table.rows(), C = table.cols();

  MedianPolishFit fit;
  fit.row_effects.assign(R, 0.0);
  fit.col_effects.assign(C, 0.0);
  fit.residuals = table.cells();
  fit.row_centers = table.row_centers();
  fit.col_centers = table.col_centers();
  auto& z = fit.residuals;

  for (std::size_t iter = 1; iter <= opt.max_iter; ++iter) {
    double largest = 0.0;

    for (std::size_t i = 0; i < R; ++i) {
      std::vector<double> present;
      for (const auto& v : z[i])
        if (v) present.push_back(*v);
      const double m = detail::median(std::move(present));
      for (auto& v : z[i])
        if (v) *v -= m;
      fit.row_effects[i] += m;
      largest = std::max(largest, std::abs(m));
    }
    {
      const double m = detail::median(fit.col_effects);
      for (auto& c : fit.col_effects) c -= m;
      fit.overall += m;
    }

    for (std::size_t j = 0; j < C; ++j) {
      std::vector<double> present;
      for (std::size_t i = 0; i < R; ++i)
        if (z[i][j]) present.push_back(*z[i][j]);
      const double m = detail::median(std::move(present));
      for (std::size_t i = 0; i < R; ++i)
        if (z[i][j]) *z[i][j] -= m;
      fit.col_effects[j] += m;
      largest = std::max(largest, std::abs(m));
    }
    {
      const double m = detail::median(fit.row_effects);
      for (auto& r : fit.row_effects) r -= m;
      fit.overall += m;
    }

    fit.iterations = iter;
    if (largest <= opt.tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

/// Fitted trend at an arbitrary site: effects interpolated linearly between
/// centers (rows in y, columns in x) and held flat outside.
inline double trend_at(const MedianPolishFit& fit, const Site& s) {
  return fit.overall +
         detail::interpolate_clamped(fit.row_centers, fit.row_effects, s.y) +
         detail::interpolate_clamped(fit.col_centers, fit.col_effects, s.x);
}

inline Observations detrend(const Observations& obs, const MedianPolishFit& fit) {
  std::vector<double> v(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    v[i] = obs.value(i) - trend_at(fit, obs.site(i));
  return obs.with_values(std::move(v));
}

inline double retrend(double predicted_residual, const Site& s,
                      const MedianPolishFit& fit) {
  return predicted_residual + trend_at(fit, s);
}

struct TrendConfig {
  bool enabled = false;
  std::size_t rows = 0;  ///< 0 selects default_table_size(n)
  std::size_t cols = 0;
  MedianPolishOptions polish{};
};

/// Bin, polish, and return the fit (rows/cols defaulted from n when zero).
inline MedianPolishFit fit_trend(const Observations& obs, const TrendConfig& cfg) {
  const std::size_t rows = cfg.rows ? cfg.rows : default_table_size(obs.size());
  const std::size_t cols = cfg.cols ? cfg.cols : default_table_size(obs.size());
  return median_polish(bin_to_table(obs, rows, cols).table, cfg.polish);
}

}  // namespace krigspline
