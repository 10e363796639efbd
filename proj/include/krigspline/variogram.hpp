#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"

namespace krigspline {

/// Binned semivariogram estimate. Only occupied bins are kept.
struct EmpiricalVariogram {
  std::vector<double> lag_centers;
  std::vector<double> gamma_hat;
  std::vector<std::size_t> pair_counts;
  double max_lag = 0.0;

  std::size_t size() const noexcept { return lag_centers.size(); }
};

/// Half of the largest pairwise distance.
inline double default_max_lag(const Observations& obs) {
  double dmax = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = i + 1; j < obs.size(); ++j)
      dmax = std::max(dmax, distance(obs.site(i), obs.site(j)));
  return 0.5 * dmax;
}

/// Matheron's classic estimator on `n_bins` equal-width bins over
/// [0, max_lag]; a pair at exactly max_lag falls in the last bin.
inline EmpiricalVariogram empirical_semivariogram(
    const Observations& obs, std::size_t n_bins = 15,
    std::optional<double> max_lag = std::nullopt) {
  detail::require(obs.size() >= 2, "empirical_semivariogram: need n >= 2");
  detail::require(n_bins >= 1, "empirical_semivariogram: need n_bins >= 1");
  const double lag_max = max_lag ? *max_lag : default_max_lag(obs);
  detail::require(std::isfinite(lag_max) && lag_max > 0.0,
                  "empirical_semivariogram: max_lag must be positive");
  const double width = lag_max / static_cast<double>(n_bins);

  std::vector<double> sum(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      const double d = distance(obs.site(i), obs.site(j));
      if (d > lag_max) continue;
      const auto k = std::min(n_bins - 1, static_cast<std::size_t>(d / width));
      const double diff = obs.value(i) - obs.value(j);
      sum[k] += diff * diff;
      ++count[k];
    }
  }

  EmpiricalVariogram ev;
  ev.max_lag = lag_max;
  for (std::size_t k = 0; k < n_bins; ++k) {
    if (count[k] == 0) continue;
    ev.lag_centers.push_back((static_cast<double>(k) + 0.5) * width);
    ev.gamma_hat.push_back(sum[k] / (2.0 * static_cast<double>(count[k])));
    ev.pair_counts.push_back(count[k]);
  }
  if (ev.size() == 0)
    throw NoPairs("empirical_semivariogram: no pair within max_lag");
  return ev;
}

/// Gaussian model with nugget:
///   gamma(0) = 0,  gamma(h) = nugget + partial_sill * (1 - exp(-(h/range)^2)),
///   c(h) = nugget + partial_sill - gamma(h).
/// `range` is the scale parameter itself (no practical-range factor).
class GaussianCovariogram {
public:
  GaussianCovariogram(double nugget, double partial_sill, double range)
      : nugget_(nugget), partial_sill_(partial_sill), range_(range) {
    detail::require(std::isfinite(nugget) && nugget >= 0.0,
                    "gaussian model: nugget must be >= 0");
    detail::require(std::isfinite(partial_sill) && partial_sill >= 0.0,
                    "gaussian model: partial sill must be >= 0");
    detail::require(std::isfinite(range) && range > 0.0,
                    "gaussian model: range must be > 0");
    detail::require(nugget + partial_sill > 0.0,
                    "gaussian model: total sill must be > 0");
  }

  double nugget() const noexcept { return nugget_; }
  double partial_sill() const noexcept { return partial_sill_; }
  double range() const noexcept { return range_; }
  double sill() const noexcept { return nugget_ + partial_sill_; }

  double semivariogram(double h) const {
    if (h <= 0.0) return 0.0;
    const double r = h / range_;
    return nugget_ + partial_sill_ * -std::expm1(-r * r);
  }

  double covariance(double h) const {
    if (h <= 0.0) return sill();
    const double r = h / range_;
    return partial_sill_ * std::exp(-r * r);
  }

  /// Covariance model interface used by the kriging templates.
  double operator()(double h) const { return covariance(h); }
  double diagonal() const { return sill(); }

private:
  double nugget_;
  double partial_sill_;
  double range_;
};

inline double semivariogram_value(const GaussianCovariogram& m, double h) {
  return m.semivariogram(h);
}

inline double covariogram_value(const GaussianCovariogram& m, double h) {
  return m.covariance(h);
}

/// Sum_j N_j (gamma_hat_j / gamma_model(h_j) - 1)^2.
inline double wls_objective(const EmpiricalVariogram& ev, double nugget,
                            double partial_sill, double range) {
  if (!(nugget >= 0.0) || !(partial_sill >= 0.0) || !(range > 0.0))
    return std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t j = 0; j < ev.size(); ++j) {
    const double r = ev.lag_centers[j] / range;
    const double g = nugget + partial_sill * -std::expm1(-r * r);
    if (!(g > 0.0)) return std::numeric_limits<double>::infinity();
    const double rel = ev.gamma_hat[j] / g - 1.0;
    total += static_cast<double>(ev.pair_counts[j]) * rel * rel;
  }
  return total;
}

inline double wls_objective(const EmpiricalVariogram& ev,
                            const GaussianCovariogram& m) {
  return wls_objective(ev, m.nugget(), m.partial_sill(), m.range());
}

/// Parameter box and multistart grid used by fit_gaussian_wls. Values are in
/// units of max(gamma_hat) for the sills and of max_lag for the range.
struct WlsFitOptions {
  std::vector<double> nugget_fractions{0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> sill_fractions{0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0};
  std::vector<double> range_fractions{0.02, 0.05, 0.1, 0.2, 0.35, 0.5,
                                      0.75, 1.0, 1.5, 2.5, 4.0};
  double max_sill_factor = 10.0;    ///< upper bound on nugget and partial sill
  double min_range_factor = 1e-3;   ///< range bounds relative to max_lag
  double max_range_factor = 20.0;
  std::size_t restarts = 4;
  std::size_t iterations_per_restart = 600;
};

struct WlsGridPoint {
  double nugget, partial_sill, range, objective;
};

namespace detail {

/// Nelder-Mead on a box; points are clamped into the box before evaluation.
/// The best vertex never gets worse, so the result is no worse than `start`.
template <class F>
std::array<double, 3> nelder_mead_box(F&& f, std::array<double, 3> start,
                                      const std::array<double, 3>& lo,
                                      const std::array<double, 3>& hi,
                                      std::size_t iterations) {
  using Point = std::array<double, 3>;
  auto clamp = [&](Point p) {
    for (int k = 0; k < 3; ++k) p[k] = std::clamp(p[k], lo[k], hi[k]);
    return p;
  };
  std::array<Point, 4> v;
  std::array<double, 4> fv;
  v[0] = clamp(start);
  for (int k = 0; k < 3; ++k) {
    Point p = v[0];
    const double step = 0.1 * (hi[k] - lo[k]);
    p[k] = p[k] + step <= hi[k] ? p[k] + step : p[k] - step;
    v[k + 1] = clamp(p);
  }
  for (int k = 0; k < 4; ++k) fv[k] = f(v[k]);

  for (std::size_t it = 0; it < iterations; ++it) {
    std::array<int, 4> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = order[0], worst = order[3], second = order[2];
    if (std::abs(fv[worst] - fv[best]) <= 1e-15 * (1.0 + std::abs(fv[best]))) {
      double spread = 0.0;
      for (int k = 0; k < 3; ++k)
        spread = std::max(spread, std::abs(v[worst][k] - v[best][k]) /
                                      (hi[k] - lo[k]));
      if (spread < 1e-12) break;
    }

    Point centroid{0.0, 0.0, 0.0};
    for (int idx : order)
      if (idx != worst)
        for (int k = 0; k < 3; ++k) centroid[k] += v[idx][k] / 3.0;
    auto along = [&](double t) {
      Point p;
      for (int k = 0; k < 3; ++k)
        p[k] = centroid[k] + t * (v[worst][k] - centroid[k]);
      return clamp(p);
    };

    const Point xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fv[best]) {
      const Point xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        v[worst] = xe;
        fv[worst] = fe;
      } else {
        v[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      v[worst] = xr;
      fv[worst] = fr;
    } else {
      const Point xc = fr < fv[worst] ? along(-0.5) : along(0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fv[worst])) {
        v[worst] = xc;
        fv[worst] = fc;
      } else {
        for (int idx : order) {
          if (idx == best) continue;
          for (int k = 0; k < 3; ++k)
            v[idx][k] = v[best][k] + 0.5 * (v[idx][k] - v[best][k]);
          v[idx] = clamp(v[idx]);
          fv[idx] = f(v[idx]);
        }
      }
    }
  }
  int best = 0;
  for (int k = 1; k < 4; ++k)
    if (fv[k] < fv[best]) best = k;
  return v[best];
}

}  // namespace detail

/// Multistart grid over (nugget, partial sill, range) in the order the
/// options list them, partial sill outermost. Used by the fitter and exposed
/// for its sanity checks.
inline std::vector<WlsGridPoint> wls_start_grid(const EmpiricalVariogram& ev,
                                                const WlsFitOptions& opt = {}) {
  const double gmax = *std::max_element(ev.gamma_hat.begin(), ev.gamma_hat.end());
  std::vector<WlsGridPoint> grid;
  for (double fs : opt.sill_fractions)
    for (double fn : opt.nugget_fractions)
      for (double fr : opt.range_fractions) {
        const double c0 = fn * gmax, c1 = fs * gmax, a = fr * ev.max_lag;
        grid.push_back({c0, c1, a, wls_objective(ev, c0, c1, a)});
      }
  return grid;
}

/// Weighted least-squares fit of the Gaussian model to an empirical
/// semivariogram, minimizing sum_j N_j (gamma_hat_j / gamma(h_j) - 1)^2.
/// Deterministic: fixed start grid, fixed Nelder-Mead budget.
inline GaussianCovariogram fit_gaussian_wls(const EmpiricalVariogram& ev,
                                            const WlsFitOptions& opt = {}) {
  detail::require(ev.size() >= 3, "fit_gaussian_wls: need at least 3 occupied bins");
  const double gmax = *std::max_element(ev.gamma_hat.begin(), ev.gamma_hat.end());
  if (!(gmax > 0.0))
    throw DegenerateVariogram("fit_gaussian_wls: every gamma_hat is zero");

  // search in normalized coordinates (sills / gmax, range / max_lag)
  const std::array<double, 3> lo{0.0, 0.0, opt.min_range_factor};
  const std::array<double, 3> hi{opt.max_sill_factor, opt.max_sill_factor,
                                 opt.max_range_factor};
  auto objective = [&](const std::array<double, 3>& p) {
    return wls_objective(ev, p[0] * gmax, p[1] * gmax, p[2] * ev.max_lag);
  };

  std::array<double, 3> best{};
  double best_value = std::numeric_limits<double>::infinity();
  for (const auto& g : wls_start_grid(ev, opt)) {
    if (g.objective < best_value) {
      best_value = g.objective;
      best = {g.nugget / gmax, g.partial_sill / gmax, g.range / ev.max_lag};
    }
  }
  detail::require(std::isfinite(best_value), "fit_gaussian_wls: no finite start point");

  for (std::size_t r = 0; r < opt.restarts && best_value > 0.0; ++r) {
    const auto candidate = detail::nelder_mead_box(objective, best, lo, hi,
                                                   opt.iterations_per_restart);
    const double value = objective(candidate);
    if (value < best_value) {
      best_value = value;
      best = candidate;
    } else {
      break;
    }
  }
  return GaussianCovariogram(best[0] * gmax, best[1] * gmax, best[2] * ev.max_lag);
}

}  // namespace krigspline
