#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "krigspline/krigspline.hpp"
#include "krigspline/io.hpp"

namespace krigspline::cli {

enum class Command { variogram, krige, spline, compare, simulate };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::variogram: return "variogram";
    case Command::krige: return "krige";
    case Command::spline: return "spline";
    case Command::compare: return "compare";
    case Command::simulate: return "simulate";
  }
  return "?";
}

/// Everything one invocation needs. String-valued options keep the user's
/// spelling so the report can echo the effective configuration.
struct RunConfig {
  Command command = Command::compare;
  std::string input;
  std::string output;
  int drift = 0;
  std::size_t bins = 15;
  std::optional<double> max_lag;
  std::optional<double> alpha;  ///< empty means "auto" (GCV)
  bool trend = false;
  std::size_t trend_rows = 0;   ///< 0 = default from n
  std::size_t trend_cols = 0;
  std::optional<Grid> grid;
  std::uint64_t seed = 0;
  RefitPolicy refit = RefitPolicy::fixed;
  SplineVarianceScale spline_variance = SplineVarianceScale::none;
  bool average_duplicates = false;
  /// Fixed covariogram for krige/compare; fitted to the data when empty.
  std::optional<GaussianCovariogram> model;

  // simulate
  double nugget = 0.5;
  double partial_sill = 4.0;
  double range = 2.0;
  std::optional<std::array<double, 3>> trend_coef;
  std::size_t random_sites = 0;  ///< 0 = use the grid nodes
};

/// "xmin,xmax,ymin,ymax,nx,ny"
inline Grid parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  if (parts.size() != 6) throw UsageError("--grid expects xmin,xmax,ymin,ymax,nx,ny");
  Grid g;
  double* bounds[] = {&g.x_min, &g.x_max, &g.y_min, &g.y_max};
  for (int k = 0; k < 4; ++k) {
    const auto v = io::parse_double(parts[static_cast<std::size_t>(k)]);
    if (!v) throw UsageError("--grid: '" + parts[static_cast<std::size_t>(k)] + "' is not a number");
    *bounds[k] = *v;
  }
  for (int k = 4; k < 6; ++k) {
    const auto v = io::parse_double(parts[static_cast<std::size_t>(k)]);
    if (!v || *v < 1 || *v != static_cast<double>(static_cast<std::size_t>(*v)))
      throw UsageError("--grid: nx and ny must be positive integers");
    (k == 4 ? g.nx : g.ny) = static_cast<std::size_t>(*v);
  }
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
  return g;
}

inline std::array<double, 3> parse_coefficients(const std::string& text) {
  std::array<double, 3> out{};
  std::stringstream ss(text);
  std::size_t k = 0;
  for (std::string item; std::getline(ss, item, ',');) {
    const auto v = io::parse_double(item);
    if (!v || k >= 3) throw UsageError("--trend-coef expects b0,b1,b2");
    out[k++] = *v;
  }
  if (k != 3) throw UsageError("--trend-coef expects b0,b1,b2");
  return out;
}

/// "nugget,partial_sill,range"
inline GaussianCovariogram parse_model(const std::string& text) {
  const auto c = [&] {
    try {
      return parse_coefficients(text);
    } catch (const UsageError&) {
      throw UsageError("--model expects nugget,partial_sill,range");
    }
  }();
  try {
    return GaussianCovariogram(c[0], c[1], c[2]);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--model: ") + e.what());
  }
}

namespace detail {

inline Observations load(const RunConfig& cfg) {
  std::ifstream in(cfg.input);
  if (!in) throw Error("cannot open input '" + cfg.input + "'", "input");
  return io::read_observations(in, cfg.average_duplicates ? DuplicatePolicy::average
                                                          : DuplicatePolicy::reject);
}

inline std::ofstream open_output(const RunConfig& cfg) {
  std::ofstream out(cfg.output, std::ios::binary);
  if (!out) throw Error("cannot open output '" + cfg.output + "'", "output");
  return out;
}

inline std::string grid_text(const Grid& g) {
  return io::format_double(g.x_min) + "," + io::format_double(g.x_max) + "," +
         io::format_double(g.y_min) + "," + io::format_double(g.y_max) + "," +
         std::to_string(g.nx) + "," + std::to_string(g.ny);
}

inline io::ReportHeader config_fields(const RunConfig& c) {
  io::ReportHeader h;
  auto opt = [](const std::optional<double>& v) {
    return v ? io::format_double(*v) : std::string("auto");
  };
  h.emplace_back("command", to_string(c.command));
  h.emplace_back("config.input", c.input);
  h.emplace_back("config.drift", std::to_string(c.drift));
  h.emplace_back("config.bins", std::to_string(c.bins));
  h.emplace_back("config.model",
                 c.model ? io::format_double(c.model->nugget()) + "," +
                               io::format_double(c.model->partial_sill()) + "," +
                               io::format_double(c.model->range())
                         : std::string("fit"));
  h.emplace_back("config.max_lag", opt(c.max_lag));
  h.emplace_back("config.alpha", opt(c.alpha));
  h.emplace_back("config.trend", c.trend ? "median-polish" : "none");
  h.emplace_back("config.trend_rows", c.trend_rows ? std::to_string(c.trend_rows) : "auto");
  h.emplace_back("config.trend_cols", c.trend_cols ? std::to_string(c.trend_cols) : "auto");
  h.emplace_back("config.refit", c.refit == RefitPolicy::fixed ? "fixed" : "strict");
  h.emplace_back("config.spline_variance",
                 c.spline_variance == SplineVarianceScale::none ? "generalized" : "reml");
  h.emplace_back("config.duplicates", c.average_duplicates ? "average" : "reject");
  return h;
}

inline TrendConfig trend_config(const RunConfig& c) {
  TrendConfig t;
  t.enabled = c.trend;
  t.rows = c.trend_rows;
  t.cols = c.trend_cols;
  return t;
}

inline KrigingConfig kriging_config(const RunConfig& c) {
  KrigingConfig k;
  k.drift_degree = c.drift;
  k.bins = c.bins;
  k.max_lag = c.max_lag;
  k.refit = c.refit;
  k.model = c.model;
  return k;
}

inline SplineConfig spline_config(const RunConfig& c) {
  SplineConfig s;
  s.alpha = c.alpha;
  s.refit = c.refit;
  s.variance_scale = c.spline_variance;
  return s;
}

inline const Grid& require_grid(const RunConfig& c) {
  if (!c.grid) throw UsageError(std::string(to_string(c.command)) + " requires --grid");
  return *c.grid;
}

inline void run_variogram(const RunConfig& c) {
  const auto obs = load(c);
  const auto trend = krigspline::detail::fit_optional_trend(obs, trend_config(c));
  const Observations resid = trend ? detrend(obs, *trend) : obs;
  const auto ev = krigspline::detail::with_stage(
      "variogram", [&] { return empirical_semivariogram(resid, c.bins, c.max_lag); });
  const auto model = krigspline::detail::with_stage("variogram-fit", [&] { return fit_gaussian_wls(ev); });

  auto header = config_fields(c);
  header.emplace_back("n", std::to_string(obs.size()));
  header.emplace_back("variogram.estimator", "classic (Matheron) semivariogram");
  header.emplace_back("variogram.max_lag", io::format_double(ev.max_lag));
  io::append_model(header, model);
  header.emplace_back("variogram.wls_objective", io::format_double(wls_objective(ev, model)));
  auto out = open_output(c);
  io::write_header(out, header);
  out << "[lags]\nlag_center,gamma_hat,pair_count,gamma_model\n";
  for (std::size_t j = 0; j < ev.size(); ++j)
    out << io::format_double(ev.lag_centers[j]) << ',' << io::format_double(ev.gamma_hat[j])
        << ',' << ev.pair_counts[j] << ','
        << io::format_double(model.semivariogram(ev.lag_centers[j])) << '\n';
}

inline void run_krige(const RunConfig& c) {
  const auto sites = grid_sites(require_grid(c));
  const auto obs = load(c);
  const auto trend = krigspline::detail::fit_optional_trend(obs, trend_config(c));
  const Observations resid = trend ? detrend(obs, *trend) : obs;
  const auto model = krigspline::detail::with_stage(
      "variogram", [&] { return fit_covariogram(resid, kriging_config(c)); });
  const auto sys = krigspline::detail::with_stage("kriging", [&] {
    return assemble_system(resid, model, DriftBasis(c.drift));
  });
  std::vector<io::GridRow> rows;
  rows.reserve(sites.size());
  krigspline::detail::with_stage("kriging", [&] {
    for (const auto& s : sites) {
      const auto p = predict_primal(sys, s);
      const double value = trend ? retrend(p.value, s, *trend) : p.value;
      rows.push_back({s, value, p.variance});
    }
  });
  auto out = open_output(c);
  io::write_grid(out, rows, true);
}

inline void run_spline(const RunConfig& c) {
  const auto sites = grid_sites(require_grid(c));
  const auto obs = load(c);
  const auto trend = krigspline::detail::fit_optional_trend(obs, trend_config(c));
  const Observations resid = trend ? detrend(obs, *trend) : obs;
  const double alpha = krigspline::detail::with_stage("spline-alpha", [&] {
    return c.alpha ? *c.alpha : select_alpha_gcv(resid).alpha;
  });
  const auto fit = krigspline::detail::with_stage("spline", [&] { return fit_tps(resid, alpha); });
  std::vector<io::GridRow> rows;
  rows.reserve(sites.size());
  for (const auto& s : sites) {
    const double p = predict_tps(fit, s);
    rows.push_back({s, trend ? retrend(p, s, *trend) : p, std::nullopt});
  }
  auto out = open_output(c);
  io::write_grid(out, rows, false);
}

inline void run_compare(const RunConfig& c) {
  const auto obs = load(c);
  const auto report =
      compare_methods(obs, kriging_config(c), spline_config(c), trend_config(c));
  auto header = config_fields(c);
  for (auto& kv : io::comparison_fields(report, obs.size())) header.push_back(std::move(kv));
  auto out = open_output(c);
  io::write_header(out, header);
  io::write_loo_table(out, report, obs);
}

inline void run_simulate(const RunConfig& c) {
  const Grid& g = require_grid(c);
  const auto sites = c.random_sites
                         ? random_sites(c.random_sites, {g.x_min, g.x_max, g.y_min, g.y_max},
                                        c.seed ^ 0x9E3779B97F4A7C15ull)
                         : grid_sites(g);
  const auto obs = krigspline::detail::with_stage("simulate", [&] {
    return simulate_field({GaussianCovariogram(c.nugget, c.partial_sill, c.range),
                           c.trend_coef, c.seed},
                          sites);
  });
  auto out = open_output(c);
  io::write_observations(out, obs);
}

}  // namespace detail

/// Execute one command. Returns the process exit status: 0 on success, 2 for
/// usage errors, 1 for anything else; failures print one labelled line to
/// `err`.
inline int run(const RunConfig& c, std::ostream& err = std::cerr) {
  try {
    if (c.command != Command::simulate && c.input.empty())
      throw UsageError("--input is required");
    if (c.output.empty()) throw UsageError("--output is required");
    switch (c.command) {
      case Command::variogram: detail::run_variogram(c); break;
      case Command::krige: detail::run_krige(c); break;
      case Command::spline: detail::run_spline(c); break;
      case Command::compare: detail::run_compare(c); break;
      case Command::simulate: detail::run_simulate(c); break;
    }
    return 0;
  } catch (const UsageError& e) {
    err << "error [usage]: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error [" << (e.stage().empty() ? to_string(c.command) : e.stage().c_str())
        << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error [" << to_string(c.command) << "]: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace krigspline::cli
