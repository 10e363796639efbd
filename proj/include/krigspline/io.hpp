#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "krigspline/crossval.hpp"
#include "krigspline/errors.hpp"
#include "krigspline/geometry.hpp"
#include "krigspline/variogram.hpp"

namespace krigspline::io {

inline constexpr int kReportSchemaVersion = 1;

/// Shortest text that is guaranteed to round-trip a double: 17 significant
/// digits, "C"-locale formatting.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Parse a whole field as a double; nullopt unless every character is used.
inline std::optional<double> parse_double(std::string_view s) {
  s = detail::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Observations CSV: header `x,y,value`, one site per line, decimal point,
/// comma separator. Blank lines are ignored. Errors name the 1-based line.
inline Observations read_observations(std::istream& in,
                                      DuplicatePolicy policy = DuplicatePolicy::reject) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<Site> sites;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (detail::trim(view).empty()) continue;
    const auto fields = detail::split(view, ',');
    if (!header) {
      if (fields.size() != 3 || fields[0] != "x" || fields[1] != "y" || fields[2] != "value")
        throw ParseError("line " + std::to_string(lineno) +
                             ": expected header 'x,y,value'",
                         lineno);
      header = true;
      continue;
    }
    if (fields.size() != 3)
      throw ParseError("line " + std::to_string(lineno) + ": expected 3 fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    static constexpr const char* names[] = {"x", "y", "value"};
    double parsed[3];
    for (int k = 0; k < 3; ++k) {
      const auto v = parse_double(fields[static_cast<std::size_t>(k)]);
      if (!v)
        throw ParseError("line " + std::to_string(lineno) + ": non-numeric " + names[k] +
                             " '" + std::string(fields[static_cast<std::size_t>(k)]) + "'",
                         lineno);
      parsed[k] = *v;
    }
    sites.push_back({parsed[0], parsed[1]});
    values.push_back(parsed[2]);
  }
  if (!header) throw ParseError("input is empty; expected header 'x,y,value'", lineno);
  if (sites.empty()) throw ParseError("input has no observations", lineno);
  return Observations(std::move(sites), std::move(values), policy);
}

inline void write_observations(std::ostream& out, const Observations& obs) {
  out << "x,y,value\n";
  for (std::size_t i = 0; i < obs.size(); ++i)
    out << format_double(obs.site(i).x) << ',' << format_double(obs.site(i).y) << ','
        << format_double(obs.value(i)) << '\n';
}

/// Grid predictions: `x,y,prediction[,variance]`.
struct GridRow {
  Site site;
  double prediction = 0.0;
  std::optional<double> variance;
};

inline void write_grid(std::ostream& out, const std::vector<GridRow>& rows, bool with_variance) {
  out << (with_variance ? "x,y,prediction,variance\n" : "x,y,prediction\n");
  for (const auto& r : rows) {
    out << format_double(r.site.x) << ',' << format_double(r.site.y) << ','
        << format_double(r.prediction);
    if (with_variance) out << ',' << format_double(r.variance.value_or(0.0));
    out << '\n';
  }
}

/// Ordered key/value pairs written at the top of a report.
using ReportHeader = std::vector<std::pair<std::string, std::string>>;

inline constexpr std::string_view kGaussianModelText =
    "gamma(h) = nugget + partial_sill * (1 - exp(-(h/range)^2)), gamma(0) = 0";

inline void append_model(ReportHeader& h, const GaussianCovariogram& m) {
  h.emplace_back("variogram.model", std::string(kGaussianModelText));
  h.emplace_back("variogram.nugget", format_double(m.nugget()));
  h.emplace_back("variogram.partial_sill", format_double(m.partial_sill()));
  h.emplace_back("variogram.sill", format_double(m.sill()));
  h.emplace_back("variogram.range", format_double(m.range()));
}

/// Report layout (schema 1):
///
///     # krigspline report
///     schema_version = 1
///     key = value            (one per line, in a fixed order)
///     ...
///     [table-name]
///     csv header
///     csv rows
///
/// Keys never contain '=' and values never contain newlines.
inline void write_header(std::ostream& out, const ReportHeader& header) {
  out << "# krigspline report\n";
  out << "schema_version = " << kReportSchemaVersion << '\n';
  for (const auto& [k, v] : header) out << k << " = " << v << '\n';
}

inline void write_loo_table(std::ostream& out, const ComparisonReport& report,
                            const Observations& obs) {
  out << "[loo]\n";
  out << "method,site_index,x,y,truth,prediction,sigma,standardized_residual\n";
  auto rows = [&](const char* method, const std::vector<LooRecord>& records) {
    for (const auto& r : records) {
      const Site& s = obs.site(r.site_index);
      out << method << ',' << r.site_index << ',' << format_double(s.x) << ','
          << format_double(s.y) << ',' << format_double(r.truth) << ','
          << format_double(r.prediction) << ',' << format_double(r.sigma) << ','
          << format_double(r.standardized_residual) << '\n';
    }
  };
  rows("kriging", report.kriging_records);
  rows("spline", report.spline_records);
}

/// Result keys of a comparison report, in output order.
inline ReportHeader comparison_fields(const ComparisonReport& r, std::size_t n) {
  ReportHeader h;
  h.emplace_back("n", std::to_string(n));
  if (r.covariogram) append_model(h, *r.covariogram);
  h.emplace_back("kriging.drift_degree", std::to_string(r.drift_degree));
  h.emplace_back("kriging.refit", r.kriging_refit == RefitPolicy::fixed ? "fixed" : "strict");
  if (r.spline) {
    h.emplace_back("spline.alpha", format_double(r.spline->alpha));
    h.emplace_back("spline.alpha_selection", r.spline->selected_by_gcv ? "gcv" : "fixed");
    h.emplace_back("spline.variance_scale", format_double(r.spline->variance_scale));
  }
  h.emplace_back("spline.sigma",
                 "bordered kriging variance with thin-plate generalized covariance "
                 "K + n*alpha*I and planar drift, times spline.variance_scale");
  h.emplace_back("spline.refit", r.spline_refit == RefitPolicy::fixed ? "fixed" : "strict");
  h.emplace_back("trend.enabled", r.trend.enabled ? "true" : "false");
  if (r.trend.enabled) {
    h.emplace_back("trend.rows", std::to_string(r.trend.rows));
    h.emplace_back("trend.cols", std::to_string(r.trend.cols));
    h.emplace_back("trend.iterations", std::to_string(r.trend.iterations));
    h.emplace_back("trend.converged", r.trend.converged ? "true" : "false");
    h.emplace_back("trend.overall", format_double(r.trend.overall));
  }
  h.emplace_back("msp.kriging", format_double(r.msp_kriging));
  h.emplace_back("msp.spline", format_double(r.msp_spline));
  h.emplace_back("winner", to_string(r.winner));
  return h;
}

/// Key/value section of a report (everything before the first table).
inline std::map<std::string, std::string> read_report_header(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') break;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

}  // namespace krigspline::io
