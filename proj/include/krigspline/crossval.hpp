#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"
#include "krigspline/kriging.hpp"
#include "krigspline/spline.hpp"
#include "krigspline/trend.hpp"
#include "krigspline/variogram.hpp"

namespace krigspline {

/// A point prediction with its mean-square prediction error.
struct PointPrediction {
  double value = 0.0;
  double variance = 0.0;
};

/// A fitted method: predicts (value, variance) at a site.
using Predictor = std::function<PointPrediction(const Site&)>;
/// Fits a method to a training set.
using MethodFactory = std::function<Predictor(const Observations&)>;

struct LooRecord {
  std::size_t site_index = 0;
  double truth = 0.0;
  double prediction = 0.0;
  double sigma = 0.0;
  double standardized_residual = 0.0;
};

struct LooResult {
  double msp = 0.0;
  std::vector<LooRecord> records;
};

/// Sigmas at or below this are rejected (ZeroSigma).
inline constexpr double kMinSigma = 1e-12;

/// MSP = sqrt(mean of squared standardized residuals), summed in index order.
inline double msp_from_records(const std::vector<LooRecord>& records) {
  double sum = 0.0;
  for (const auto& r : records) sum += r.standardized_residual * r.standardized_residual;
  return std::sqrt(sum / static_cast<double>(records.size()));
}

inline LooRecord make_record(std::size_t index, double truth, double prediction,
                             double variance) {
  const double sigma = std::sqrt(std::max(variance, 0.0));
  if (!(sigma > kMinSigma))
    throw ZeroSigma("loo: prediction standard error at site " + std::to_string(index) +
                        " is zero",
                    index);
  return {index, truth, prediction, sigma, (truth - prediction) / sigma};
}

/// Leave-one-out cross-validation: for each j, fit on the data without j and
/// predict Z(t_j) together with its standard error.
inline LooResult loo_msp(const Observations& obs, const MethodFactory& method) {
  detail::require(obs.size() >= 4, "loo_msp: need at least 4 observations");
  LooResult out;
  out.records.reserve(obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j) {
    PointPrediction p;
    try {
      const Predictor predictor = method(obs.without(j));
      p = predictor(obs.site(j));
    } catch (const std::exception& e) {
      throw FitFailure("loo: fit without site " + std::to_string(j) + " failed: " + e.what(),
                       j);
    }
    out.records.push_back(make_record(j, obs.value(j), p.value, p.variance));
  }
  out.msp = msp_from_records(out.records);
  return out;
}

enum class RefitPolicy {
  fixed,   ///< model parameters estimated once on all data
  strict,  ///< parameters re-estimated on every leave-one-out training set
};

// ---------------------------------------------------------------- kriging

struct KrigingConfig {
  int drift_degree = 0;
  std::size_t bins = 15;
  std::optional<double> max_lag;
  /// When set, used instead of fitting a model to the empirical variogram.
  std::optional<GaussianCovariogram> model;
  RefitPolicy refit = RefitPolicy::fixed;
};

inline GaussianCovariogram fit_covariogram(const Observations& obs, const KrigingConfig& cfg) {
  if (cfg.model) return *cfg.model;
  return fit_gaussian_wls(empirical_semivariogram(obs, cfg.bins, cfg.max_lag));
}

/// Kriging with a fixed covariogram; variance from the primal formulas.
inline MethodFactory kriging_method(const GaussianCovariogram& model, DriftBasis basis) {
  return [model, basis](const Observations& train) -> Predictor {
    auto sys = std::make_shared<const KrigingSystem<GaussianCovariogram>>(train, model, basis);
    return [sys](const Site& t0) {
      const auto p = predict_primal(*sys, t0);
      return PointPrediction{p.value, p.variance};
    };
  };
}

/// Kriging that re-estimates the covariogram on each training set.
inline MethodFactory kriging_method_refit(const KrigingConfig& cfg) {
  return [cfg](const Observations& train) -> Predictor {
    return kriging_method(fit_covariogram(train, cfg), DriftBasis(cfg.drift_degree))(train);
  };
}

// ----------------------------------------------------------------- spline

/// Scale applied to the generalized-covariance variance of the spline.
enum class SplineVarianceScale {
  none,  ///< use K_alpha as is (default)
  reml,  ///< multiply by Z'b / (n - 3), the restricted ML scale of K_alpha
};

struct SplineConfig {
  std::optional<double> alpha;  ///< fixed alpha; GCV selection when empty
  std::optional<std::vector<double>> alpha_grid;
  RefitPolicy refit = RefitPolicy::fixed;
  SplineVarianceScale variance_scale = SplineVarianceScale::none;
};

/// Restricted-likelihood scale of the generalized covariance K_alpha given a
/// fit: Z'b / (n - 3) = b'K_alpha b / (n - 3).
inline double tps_variance_scale(const TpsFit& fit) {
  const auto n = fit.obs.size();
  detail::require(n > 3, "tps_variance_scale: need more than 3 observations");
  return std::max(0.0, to_vector(fit.obs.values()).dot(fit.b)) /
         static_cast<double>(n - 3);
}

/// Spline with K_alpha = K + ridge I held fixed across training sets (so a
/// training set of size m uses alpha = ridge / m). The prediction is the
/// spline itself; its variance is the kriging variance of the bordered
/// system with the thin-plate generalized covariance, times `scale`.
inline MethodFactory spline_method(double ridge, double scale) {
  return [ridge, scale](const Observations& train) -> Predictor {
    auto fit = std::make_shared<const TpsFit>(
        fit_tps(train, ridge / static_cast<double>(train.size())));
    auto sys = std::make_shared<const KrigingSystem<TpsGeneralizedCovariance>>(
        train, TpsGeneralizedCovariance{ridge}, DriftBasis(1));
    return [fit, sys, scale](const Site& t0) {
      const auto p = predict_bordered(*sys, t0);
      return PointPrediction{predict_tps(*fit, t0), scale * p.variance};
    };
  };
}

struct SplineParameters {
  double alpha = 0.0;
  bool selected_by_gcv = false;
  double variance_scale = 1.0;
};

inline SplineParameters spline_parameters(const Observations& obs, const SplineConfig& cfg) {
  SplineParameters p;
  if (cfg.alpha) {
    p.alpha = *cfg.alpha;
  } else {
    p.alpha = select_alpha_gcv(obs, cfg.alpha_grid).alpha;
    p.selected_by_gcv = true;
  }
  if (cfg.variance_scale == SplineVarianceScale::reml)
    p.variance_scale = tps_variance_scale(fit_tps(obs, p.alpha));
  return p;
}

inline MethodFactory spline_method_refit(const SplineConfig& cfg) {
  return [cfg](const Observations& train) -> Predictor {
    const auto p = spline_parameters(train, cfg);
    return spline_method(static_cast<double>(train.size()) * p.alpha, p.variance_scale)(train);
  };
}

// -------------------------------------------------------------- fast LOO

/// Leave-one-out for a fixed covariance from one factorization of the full
/// system. Equivalent to loo_msp with kriging_method (or spline_method) and
/// the same parameters.
template <CovarianceModel Cov>
LooResult loo_fast(const Observations& obs, const Cov& cov, DriftBasis basis,
                   double variance_scale = 1.0) {
  detail::require(obs.size() >= 4, "loo_msp: need at least 4 observations");
  const auto fit = fit_dual(KrigingSystem<Cov>(obs, cov, basis));
  const auto loo = loo_from_full_fit(fit);
  LooResult out;
  for (std::size_t j = 0; j < obs.size(); ++j)
    out.records.push_back(make_record(j, obs.value(j), loo.prediction[j],
                                      variance_scale * loo.variance[j]));
  out.msp = msp_from_records(out.records);
  return out;
}

// ------------------------------------------------------------- comparison

enum class Winner { kriging, spline, tie };

inline const char* to_string(Winner w) {
  switch (w) {
    case Winner::kriging: return "kriging";
    case Winner::spline: return "spline";
    case Winner::tie: return "tie";
  }
  return "tie";
}

/// Differences in MSP at or below this count as a tie.
inline constexpr double kTieTolerance = 1e-12;

inline Winner decide_winner(double msp_kriging, double msp_spline) {
  if (std::abs(msp_kriging - msp_spline) <= kTieTolerance) return Winner::tie;
  return msp_kriging < msp_spline ? Winner::kriging : Winner::spline;
}

struct TrendSummary {
  bool enabled = false;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t iterations = 0;
  bool converged = false;
  double overall = 0.0;
};

struct ComparisonReport {
  double msp_kriging = 0.0;
  double msp_spline = 0.0;
  Winner winner = Winner::tie;
  std::vector<LooRecord> kriging_records;
  std::vector<LooRecord> spline_records;

  TrendSummary trend;
  std::optional<GaussianCovariogram> covariogram;
  int drift_degree = 0;
  std::optional<SplineParameters> spline;
  RefitPolicy kriging_refit = RefitPolicy::fixed;
  RefitPolicy spline_refit = RefitPolicy::fixed;
};

namespace detail {

template <class F>
auto with_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (Error& e) {
    if (e.stage().empty()) e.set_stage(stage);
    throw;
  }
}

/// Put leave-one-out records computed on detrended values back on the data
/// scale: truth is the original value, the prediction is re-trended.
inline void retrend_records(std::vector<LooRecord>& records, const Observations& original,
                            const std::optional<MedianPolishFit>& trend) {
  for (auto& r : records) {
    r.truth = original.value(r.site_index);
    if (trend) r.prediction = retrend(r.prediction, original.site(r.site_index), *trend);
    r.standardized_residual = (r.truth - r.prediction) / r.sigma;
  }
}

inline std::optional<MedianPolishFit> fit_optional_trend(const Observations& obs,
                                                         const TrendConfig& cfg) {
  if (!cfg.enabled) return std::nullopt;
  return with_stage("trend", [&] { return fit_trend(obs, cfg); });
}

inline TrendSummary summarize(const std::optional<MedianPolishFit>& fit) {
  TrendSummary s;
  if (!fit) return s;
  s.enabled = true;
  s.rows = fit->row_effects.size();
  s.cols = fit->col_effects.size();
  s.iterations = fit->iterations;
  s.converged = fit->converged;
  s.overall = fit->overall;
  return s;
}

inline void finish(ComparisonReport& report, const Observations& obs,
                   const std::optional<MedianPolishFit>& trend, LooResult kriging,
                   LooResult spline) {
  retrend_records(kriging.records, obs, trend);
  retrend_records(spline.records, obs, trend);
  report.kriging_records = std::move(kriging.records);
  report.spline_records = std::move(spline.records);
  report.msp_kriging = msp_from_records(report.kriging_records);
  report.msp_spline = msp_from_records(report.spline_records);
  report.winner = decide_winner(report.msp_kriging, report.msp_spline);
  report.trend = summarize(trend);
}

}  // namespace detail

/// Compare two arbitrary methods by leave-one-out MSP on the (optionally
/// detrended) data.
inline ComparisonReport compare_with_methods(const Observations& obs,
                                             const MethodFactory& kriging,
                                             const MethodFactory& spline,
                                             const TrendConfig& trend_cfg = {}) {
  detail::require(obs.size() >= 8, "compare_methods: need at least 8 observations");
  const auto trend = detail::fit_optional_trend(obs, trend_cfg);
  const Observations resid = trend ? detrend(obs, *trend) : obs;
  auto k = detail::with_stage("kriging-loo", [&] { return loo_msp(resid, kriging); });
  auto s = detail::with_stage("spline-loo", [&] { return loo_msp(resid, spline); });
  ComparisonReport report;
  detail::finish(report, obs, trend, std::move(k), std::move(s));
  return report;
}

/// Full pipeline: optional median-polish detrending, Gaussian covariogram fit
/// and kriging leave-one-out; alpha selection and spline leave-one-out; both
/// on the same residual field.
inline ComparisonReport compare_methods(const Observations& obs,
                                        const KrigingConfig& kcfg = {},
                                        const SplineConfig& scfg = {},
                                        const TrendConfig& tcfg = {}) {
  detail::require(obs.size() >= 8, "compare_methods: need at least 8 observations");
  const DriftBasis basis(kcfg.drift_degree);
  const auto trend = detail::fit_optional_trend(obs, tcfg);
  const Observations resid = trend ? detrend(obs, *trend) : obs;

  ComparisonReport report;
  report.drift_degree = kcfg.drift_degree;
  report.kriging_refit = kcfg.refit;
  report.spline_refit = scfg.refit;

  const auto model = detail::with_stage("variogram", [&] { return fit_covariogram(resid, kcfg); });
  report.covariogram = model;
  auto kriging = detail::with_stage("kriging-loo", [&] {
    return kcfg.refit == RefitPolicy::fixed
               ? loo_fast(resid, model, basis)
               : loo_msp(resid, kriging_method_refit(kcfg));
  });

  const auto params = detail::with_stage("spline-fit", [&] { return spline_parameters(resid, scfg); });
  report.spline = params;
  auto spline = detail::with_stage("spline-loo", [&] {
    const double ridge = static_cast<double>(resid.size()) * params.alpha;
    return scfg.refit == RefitPolicy::fixed
               ? loo_fast(resid, TpsGeneralizedCovariance{ridge}, DriftBasis(1),
                          params.variance_scale)
               : loo_msp(resid, spline_method_refit(scfg));
  });

  detail::finish(report, obs, trend, std::move(kriging), std::move(spline));
  return report;
}

}  // namespace krigspline
