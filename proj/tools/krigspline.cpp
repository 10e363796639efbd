// Command-line front end: variogram | krige | spline | compare | simulate.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "krigspline/cli.hpp"

namespace {

using krigspline::cli::Command;
using krigspline::cli::RunConfig;

struct RawOptions {
  std::string max_lag = "auto";
  std::string alpha = "auto";
  std::string trend = "none";
  std::string grid;
  std::string refit = "fixed";
  std::string spline_variance = "generalized";
  std::string trend_coef;
  std::string model;
};

void add_common(CLI::App* sub, RunConfig& cfg, RawOptions& raw, bool needs_input) {
  auto* in = sub->add_option("--input", cfg.input, "observations CSV (x,y,value)");
  if (needs_input) in->required();
  sub->add_option("--output", cfg.output, "output file")->required();
  sub->add_option("--trend", raw.trend, "none | median-polish")
      ->check(CLI::IsMember({"none", "median-polish"}));
  sub->add_option("--trend-rows", cfg.trend_rows, "median-polish table rows (default from n)")
      ->check(CLI::Range(2, 100000));
  sub->add_option("--trend-cols", cfg.trend_cols, "median-polish table columns")
      ->check(CLI::Range(2, 100000));
  sub->add_flag("--average-duplicates", cfg.average_duplicates,
                "collapse coincident sites to their mean instead of failing");
}

void add_variogram(CLI::App* sub, RunConfig& cfg, RawOptions& raw) {
  sub->add_option("--bins", cfg.bins, "number of lag bins")->check(CLI::Range(1, 100000));
  sub->add_option("--max-lag", raw.max_lag, "largest lag (default: half the max distance)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kriging and thin-plate spline spatial prediction"};
  app.require_subcommand(1);
  RunConfig cfg;
  RawOptions raw;

  auto* variogram = app.add_subcommand("variogram", "empirical semivariogram and Gaussian fit");
  add_common(variogram, cfg, raw, true);
  add_variogram(variogram, cfg, raw);

  auto* krige = app.add_subcommand("krige", "kriging predictions on a grid");
  add_common(krige, cfg, raw, true);
  add_variogram(krige, cfg, raw);
  krige->add_option("--drift", cfg.drift, "0 = ordinary, 1 = planar drift")
      ->check(CLI::IsMember({0, 1}));
  krige->add_option("--grid", raw.grid, "xmin,xmax,ymin,ymax,nx,ny")->required();
  krige->add_option("--model", raw.model, "nugget,partial_sill,range (skip the variogram fit)");

  auto* spline = app.add_subcommand("spline", "thin-plate spline predictions on a grid");
  add_common(spline, cfg, raw, true);
  spline->add_option("--alpha", raw.alpha, "smoothing parameter or 'auto' (GCV)");
  spline->add_option("--grid", raw.grid, "xmin,xmax,ymin,ymax,nx,ny")->required();

  auto* compare = app.add_subcommand("compare", "leave-one-out comparison report");
  add_common(compare, cfg, raw, true);
  add_variogram(compare, cfg, raw);
  compare->add_option("--drift", cfg.drift, "0 = ordinary, 1 = planar drift")
      ->check(CLI::IsMember({0, 1}));
  compare->add_option("--model", raw.model, "nugget,partial_sill,range (skip the variogram fit)");
  compare->add_option("--alpha", raw.alpha, "smoothing parameter or 'auto' (GCV)");
  compare->add_option("--refit", raw.refit, "fixed | strict")
      ->check(CLI::IsMember({"fixed", "strict"}));
  compare->add_option("--spline-variance", raw.spline_variance, "generalized | reml")
      ->check(CLI::IsMember({"generalized", "reml"}));

  auto* simulate = app.add_subcommand("simulate", "Gaussian random field on grid or random sites");
  simulate->add_option("--output", cfg.output, "output CSV")->required();
  simulate->add_option("--grid", raw.grid, "xmin,xmax,ymin,ymax,nx,ny")->required();
  simulate->add_option("--seed", cfg.seed, "generator seed");
  simulate->add_option("--nugget", cfg.nugget)->check(CLI::NonNegativeNumber);
  simulate->add_option("--partial-sill", cfg.partial_sill)->check(CLI::NonNegativeNumber);
  simulate->add_option("--range", cfg.range)->check(CLI::PositiveNumber);
  simulate->add_option("--trend-coef", raw.trend_coef, "b0,b1,b2 planar trend");
  simulate->add_option("--random-sites", cfg.random_sites,
                       "draw N uniform sites inside the grid bounds instead of using nodes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (variogram->parsed()) cfg.command = Command::variogram;
    if (krige->parsed()) cfg.command = Command::krige;
    if (spline->parsed()) cfg.command = Command::spline;
    if (compare->parsed()) cfg.command = Command::compare;
    if (simulate->parsed()) cfg.command = Command::simulate;

    auto number = [](const std::string& flag, const std::string& text) -> std::optional<double> {
      if (text == "auto") return std::nullopt;
      const auto v = krigspline::io::parse_double(text);
      if (!v || *v < 0.0)
        throw krigspline::UsageError(flag + " expects 'auto' or a nonnegative number");
      return v;
    };
    cfg.max_lag = number("--max-lag", raw.max_lag);
    cfg.alpha = number("--alpha", raw.alpha);
    cfg.trend = raw.trend == "median-polish";
    cfg.refit = raw.refit == "strict" ? krigspline::RefitPolicy::strict
                                      : krigspline::RefitPolicy::fixed;
    cfg.spline_variance = raw.spline_variance == "reml" ? krigspline::SplineVarianceScale::reml
                                                        : krigspline::SplineVarianceScale::none;
    if (!raw.grid.empty()) cfg.grid = krigspline::cli::parse_grid(raw.grid);
    if (!raw.model.empty()) cfg.model = krigspline::cli::parse_model(raw.model);
    if (!raw.trend_coef.empty()) cfg.trend_coef = krigspline::cli::parse_coefficients(raw.trend_coef);
  } catch (const krigspline::UsageError& e) {
    std::cerr << "error [usage]: " << e.what() << '\n';
    return 2;
  }
  return krigspline::cli::run(cfg);
}
