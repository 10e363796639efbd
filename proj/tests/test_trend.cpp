#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "krigspline/trend.hpp"
#include "test_support.hpp"

using namespace krigspline;

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void expect_reconstruction(const TwoWayTable& t, const MedianPolishFit& fit, double tol) {
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (!t.cell(i, j)) {
        EXPECT_FALSE(fit.residuals[i][j].has_value());
        continue;
      }
      const double rebuilt =
          fit.overall + fit.row_effects[i] + fit.col_effects[j] + *fit.residuals[i][j];
      EXPECT_NEAR(rebuilt, *t.cell(i, j), tol);
    }
}

void expect_centered_residuals(const MedianPolishFit& fit, double tol) {
  const auto R = fit.residuals.size(), C = fit.residuals[0].size();
  for (std::size_t i = 0; i < R; ++i) {
    std::vector<double> v;
    for (const auto& c : fit.residuals[i])
      if (c) v.push_back(*c);
    EXPECT_LE(std::abs(median_of(v)), tol) << "row " << i;
  }
  for (std::size_t j = 0; j < C; ++j) {
    std::vector<double> v;
    for (std::size_t i = 0; i < R; ++i)
      if (fit.residuals[i][j]) v.push_back(*fit.residuals[i][j]);
    EXPECT_LE(std::abs(median_of(v)), tol) << "col " << j;
  }
}

}  // namespace

TEST(MedianPolish, TwoByTwoExample) {
  const auto t = TwoWayTable::from_values({{1, 2}, {3, 4}});
  const auto fit = median_polish(t);
  EXPECT_TRUE(fit.converged);
  EXPECT_DOUBLE_EQ(fit.overall, 2.5);
  EXPECT_DOUBLE_EQ(fit.row_effects[0], -1.0);
  EXPECT_DOUBLE_EQ(fit.row_effects[1], 1.0);
  EXPECT_DOUBLE_EQ(fit.col_effects[0], -0.5);
  EXPECT_DOUBLE_EQ(fit.col_effects[1], 0.5);
  for (const auto& row : fit.residuals)
    for (const auto& c : row) EXPECT_DOUBLE_EQ(*c, 0.0);
}

TEST(MedianPolish, ConstantTable) {
  const auto fit = median_polish(TwoWayTable::from_values({{7, 7, 7}, {7, 7, 7}}));
  EXPECT_DOUBLE_EQ(fit.overall, 7.0);
  for (double r : fit.row_effects) EXPECT_EQ(r, 0.0);
  for (double c : fit.col_effects) EXPECT_EQ(c, 0.0);
  for (const auto& row : fit.residuals)
    for (const auto& c : row) EXPECT_EQ(*c, 0.0);
}

TEST(MedianPolish, SingleOutlierCell) {
  // Sweeps by hand: rows remove (0, 5), columns remove (-2.5, 2.5), the row
  // effects' median 2.5 moves to the overall; the second iteration removes
  // nothing.
  const auto t = TwoWayTable::from_values({{0, 0}, {0, 10}});
  const auto fit = median_polish(t);
  EXPECT_TRUE(fit.converged);
  EXPECT_EQ(fit.iterations, 2u);
  EXPECT_DOUBLE_EQ(fit.overall, 2.5);
  EXPECT_DOUBLE_EQ(fit.row_effects[0], -2.5);
  EXPECT_DOUBLE_EQ(fit.row_effects[1], 2.5);
  EXPECT_DOUBLE_EQ(fit.col_effects[0], -2.5);
  EXPECT_DOUBLE_EQ(fit.col_effects[1], 2.5);
  EXPECT_DOUBLE_EQ(*fit.residuals[0][0], 2.5);
  EXPECT_DOUBLE_EQ(*fit.residuals[1][1], 2.5);
  EXPECT_DOUBLE_EQ(*fit.residuals[0][1], -2.5);
  expect_reconstruction(t, fit, 1e-10);
  expect_centered_residuals(fit, 1e-6);
}

TEST(MedianPolish, ExactOnAdditiveTables) {
  testkit::Rng rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t R = rng.index(2, 9), C = rng.index(2, 9);
    const double m = rng.uniform(-10, 10);
    std::vector<double> r(R), c(C);
    for (auto& v : r) v = rng.uniform(-5, 5);
    for (auto& v : c) v = rng.uniform(-5, 5);
    std::vector<std::vector<double>> cells(R, std::vector<double>(C));
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) cells[i][j] = m + r[i] + c[j];
    const auto fit = median_polish(TwoWayTable::from_values(cells));
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.overall, m + median_of(r) + median_of(c), 1e-10);
    for (std::size_t i = 0; i < R; ++i)
      EXPECT_NEAR(fit.row_effects[i], r[i] - median_of(r), 1e-10);
    for (std::size_t j = 0; j < C; ++j)
      EXPECT_NEAR(fit.col_effects[j], c[j] - median_of(c), 1e-10);
    for (const auto& row : fit.residuals)
      for (const auto& v : row) EXPECT_NEAR(*v, 0.0, 1e-10);
  }
}

TEST(MedianPolish, InvariantsOnRandomTablesWithMissingCells) {
  testkit::Rng rng(17);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t R = rng.index(2, 8), C = rng.index(2, 8);
    std::vector<std::vector<TwoWayTable::Cell>> cells(R, std::vector<TwoWayTable::Cell>(C));
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j)
        if (rng.uniform() > 0.2) cells[i][j] = rng.normal() * 3.0 + 0.1 * static_cast<double>(i);
    for (std::size_t i = 0; i < R; ++i) cells[i][i % C] = rng.normal();
    for (std::size_t j = 0; j < C; ++j) cells[j % R][j] = rng.normal();
    std::vector<double> rc(R), cc(C);
    for (std::size_t i = 0; i < R; ++i) rc[i] = static_cast<double>(i);
    for (std::size_t j = 0; j < C; ++j) cc[j] = static_cast<double>(j);
    const TwoWayTable t(cells, rc, cc);
    const auto fit = median_polish(t, {1e-6, 500});
    expect_reconstruction(t, fit, 1e-10);
    if (fit.converged) expect_centered_residuals(fit, 1e-6);
  }
}

TEST(MedianPolish, StopsAtMaxIterWithoutConvergence) {
  const auto t = TwoWayTable::from_values({{0, 3, 1}, {8, 2, 9}, {4, 4, 0}});
  const auto fit = median_polish(t, {1e-300, 1});
  EXPECT_EQ(fit.iterations, 1u);
  expect_reconstruction(t, fit, 1e-12);
}

TEST(MedianPolish, RejectsBadOptionsAndTables) {
  const auto t = TwoWayTable::from_values({{1, 2}, {3, 4}});
  EXPECT_THROW(median_polish(t, {0.0, 10}), InvalidArgument);
  EXPECT_THROW(median_polish(t, {1e-6, 0}), InvalidArgument);
  EXPECT_THROW(TwoWayTable::from_values({{1, 2}}), InvalidArgument);
  using Cell = TwoWayTable::Cell;
  EXPECT_THROW(TwoWayTable({{Cell{}, Cell{}}, {Cell{1.0}, Cell{2.0}}}, {0, 1}, {0, 1}),
               EmptyRowOrColumn);
}

TEST(BinToTable, OnePointPerCell) {
  const Observations obs({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, {1, 2, 3, 4});
  const auto b = bin_to_table(obs, 2, 2);
  EXPECT_EQ(*b.table.cell(0, 0), 1.0);
  EXPECT_EQ(*b.table.cell(0, 1), 2.0);
  EXPECT_EQ(*b.table.cell(1, 0), 3.0);
  EXPECT_EQ(*b.table.cell(1, 1), 4.0);
  EXPECT_EQ(b.table.row_centers(), (std::vector<double>{0, 1}));
  EXPECT_EQ(b.table.col_centers(), (std::vector<double>{0, 1}));
  EXPECT_EQ(b.assignment[3].row, 1u);
  EXPECT_EQ(b.assignment[3].col, 1u);
}

TEST(BinToTable, CellValueIsMean) {
  const Observations obs({{0, 0}, {0.1, 0.1}, {1, 0}, {0, 1}, {1, 1}}, {1, 3, 5, 6, 7});
  const auto b = bin_to_table(obs, 2, 2);
  EXPECT_DOUBLE_EQ(*b.table.cell(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(b.table.row_centers()[0], (0 + 0.1 + 0) / 3.0);
}

TEST(BinToTable, EmptyRowIsReported) {
  const Observations obs({{0, 0}, {1, 0}, {2, 0}}, {1, 2, 3});
  EXPECT_THROW(bin_to_table(obs, 2, 2), EmptyRowOrColumn);
  EXPECT_THROW(bin_to_table(obs, 1, 2), InvalidArgument);
}

TEST(BinToTable, MissingCellsAllowed) {
  const Observations obs({{0, 0}, {1, 1}, {0.9, 0.2}}, {1, 2, 3});
  const auto b = bin_to_table(obs, 2, 2);
  EXPECT_FALSE(b.table.cell(1, 0).has_value());
  EXPECT_EQ(*b.table.cell(0, 1), 3.0);
}

TEST(DefaultTableSize, ClampedAtTwo) {
  EXPECT_EQ(default_table_size(1), 2u);
  EXPECT_EQ(default_table_size(8), 2u);
  EXPECT_EQ(default_table_size(9), 3u);
  EXPECT_EQ(default_table_size(50), 5u);
}

namespace {

MedianPolishFit sample_fit() {
  MedianPolishFit f;
  f.overall = 10.0;
  f.row_effects = {-1.0, 2.0, 0.5};
  f.col_effects = {3.0, -3.0};
  f.row_centers = {0.0, 1.0, 3.0};
  f.col_centers = {10.0, 20.0};
  return f;
}

}  // namespace

TEST(TrendAt, KnotsMidpointsAndClamping) {
  const auto f = sample_fit();
  EXPECT_DOUBLE_EQ(trend_at(f, {20.0, 1.0}), 10.0 + 2.0 - 3.0);
  EXPECT_DOUBLE_EQ(trend_at(f, {15.0, 1.0}), 10.0 + 2.0 + 0.0);
  EXPECT_DOUBLE_EQ(trend_at(f, {10.0, 2.0}), 10.0 + 1.25 + 3.0);
  EXPECT_DOUBLE_EQ(trend_at(f, {-1e6, -1e6}), 10.0 - 1.0 + 3.0);
  EXPECT_DOUBLE_EQ(trend_at(f, {1e6, 1e6}), 10.0 + 0.5 - 3.0);
}

TEST(Detrend, ResidualsAndInversePair) {
  const auto f = sample_fit();
  const std::vector<Site> sites{{10, 0}, {12, 0.5}, {25, 4}, {3, 2}};
  std::vector<double> on_trend;
  for (const auto& s : sites) on_trend.push_back(trend_at(f, s));
  const auto zero = detrend(Observations(sites, on_trend), f);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);

  testkit::Rng rng(3);
  const Observations obs(sites, testkit::normal_values(rng, sites.size(), 4.0));
  const auto resid = detrend(obs, f);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    EXPECT_EQ(resid.site(i), obs.site(i));
    EXPECT_NEAR(retrend(resid.value(i), obs.site(i), f), obs.value(i), 1e-12);
  }
}

TEST(Detrend, ConstantFitShiftsValues) {
  MedianPolishFit f;
  f.overall = 4.0;
  f.row_effects = {0.0, 0.0};
  f.col_effects = {0.0, 0.0};
  f.row_centers = {0.0, 1.0};
  f.col_centers = {0.0, 1.0};
  const Observations obs({{0, 0}, {5, 5}}, {1.0, 9.0});
  const auto r = detrend(obs, f);
  EXPECT_DOUBLE_EQ(r.value(0), -3.0);
  EXPECT_DOUBLE_EQ(r.value(1), 5.0);
  EXPECT_DOUBLE_EQ(retrend(0.0, {0.3, 0.3}, f), 4.0);

  MedianPolishFit flat = f;
  flat.overall = 0.0;
  EXPECT_DOUBLE_EQ(retrend(2.75, {9, 9}, flat), 2.75);
}

TEST(Detrend, PipelineOnPlanarTrendField) {
  testkit::Rng rng(21);
  const auto sites = testkit::spread_sites(rng, 80, 10.0);
  std::vector<double> v;
  for (const auto& s : sites) v.push_back(50 + 2 * s.x - 3 * s.y + 0.1 * rng.normal());
  const Observations obs(sites, v);
  const auto fit = fit_trend(obs, {true, 4, 4, {}});
  EXPECT_TRUE(fit.converged);
  const auto resid = detrend(obs, fit);
  double var_before = 0, var_after = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    var_before += (obs.value(i) - 50) * (obs.value(i) - 50);
    var_after += resid.value(i) * resid.value(i);
  }
  EXPECT_LT(var_after, 0.1 * var_before);
}
