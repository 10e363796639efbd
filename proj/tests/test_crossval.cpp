#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "krigspline/crossval.hpp"
#include "krigspline/simulate.hpp"
#include "test_support.hpp"

using namespace krigspline;

namespace {

Observations random_obs(testkit::Rng& rng, std::size_t n) {
  const auto sites = testkit::spread_sites(rng, n, 10.0, 0.05);
  return Observations(sites, testkit::normal_values(rng, n, 2.0));
}

// Predicts each held-out value exactly by looking it up in the full data set.
MethodFactory oracle_method(const Observations& full, double variance = 1.0) {
  return [full, variance](const Observations&) -> Predictor {
    return [full, variance](const Site& t) {
      for (std::size_t i = 0; i < full.size(); ++i)
        if (full.site(i) == t) return PointPrediction{full.value(i), variance};
      throw std::logic_error("site not found");
    };
  };
}

Observations simulated(std::uint64_t seed, std::size_t n) {
  const auto sites = random_sites(n, {0, 10, 0, 10}, seed * 7919);
  return simulate_field({GaussianCovariogram(0.5, 4, 2), std::nullopt, seed}, sites);
}

}  // namespace

TEST(LooMsp, OracleIsZero) {
  testkit::Rng rng(1);
  const auto obs = random_obs(rng, 12);
  const auto r = loo_msp(obs, oracle_method(obs));
  EXPECT_EQ(r.msp, 0.0);
  ASSERT_EQ(r.records.size(), obs.size());
  for (std::size_t j = 0; j < obs.size(); ++j) {
    EXPECT_EQ(r.records[j].site_index, j);
    EXPECT_EQ(r.records[j].standardized_residual, 0.0);
  }
}

TEST(LooMsp, ConstantStandardizedResidualOfOne) {
  testkit::Rng rng(2);
  const auto obs = random_obs(rng, 9);
  std::vector<double> shifted(obs.values().begin(), obs.values().end());
  for (auto& v : shifted) v -= 2.0;
  // predictions are truth - 2 with sigma 2
  const auto r = loo_msp(obs, oracle_method(obs.with_values(shifted), 4.0));
  EXPECT_DOUBLE_EQ(r.msp, 1.0);
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.sigma, 2.0);
    EXPECT_EQ(rec.standardized_residual, (rec.truth - rec.prediction) / rec.sigma);
  }
}

TEST(LooMsp, PositiveWhenAnyResidualIsNonzero) {
  testkit::Rng rng(3);
  const auto obs = random_obs(rng, 10);
  std::vector<double> v(obs.values().begin(), obs.values().end());
  v[4] += 1e-6;
  EXPECT_GT(loo_msp(obs, oracle_method(obs.with_values(v))).msp, 0.0);
}

TEST(LooMsp, Errors) {
  testkit::Rng rng(4);
  const auto obs = random_obs(rng, 8);
  EXPECT_THROW(loo_msp(random_obs(rng, 3), oracle_method(obs)), InvalidArgument);
  try {
    loo_msp(obs, oracle_method(obs, 0.0));
    FAIL() << "expected ZeroSigma";
  } catch (const ZeroSigma& e) {
    EXPECT_EQ(e.index(), 0u);
  }
  const MethodFactory flaky = [&obs](const Observations& train) -> Predictor {
    bool has_site_2 = false;
    for (std::size_t i = 0; i < train.size(); ++i) has_site_2 = has_site_2 || train.site(i) == obs.site(2);
    if (!has_site_2) throw std::runtime_error("cannot fit");
    return [](const Site&) { return PointPrediction{0.0, 1.0}; };
  };
  try {
    loo_msp(obs, flaky);
    FAIL() << "expected FitFailure";
  } catch (const FitFailure& e) {
    EXPECT_EQ(e.index(), 2u);
  }
}

TEST(LooFast, MatchesNaiveKrigingRefits) {
  testkit::Rng rng(5);
  for (int degree : {0, 1}) {
    const auto obs = random_obs(rng, 30);
    const GaussianCovariogram m(0.3, 3.0, 1.7);
    const auto fast = loo_fast(obs, m, DriftBasis(degree));
    const auto naive = loo_msp(obs, kriging_method(m, DriftBasis(degree)));
    EXPECT_LE(testkit::relative_gap(fast.msp, naive.msp), 1e-9);
    for (std::size_t j = 0; j < obs.size(); ++j) {
      EXPECT_LE(testkit::relative_gap(fast.records[j].prediction, naive.records[j].prediction),
                1e-9);
      EXPECT_LE(testkit::relative_gap(fast.records[j].sigma, naive.records[j].sigma), 1e-9);
    }
  }
}

TEST(LooFast, MatchesNaiveSplineRefits) {
  testkit::Rng rng(6);
  const auto obs = random_obs(rng, 30);
  for (double ridge : {1e-3, 0.5, 20.0}) {
    const auto fast = loo_fast(obs, TpsGeneralizedCovariance{ridge}, DriftBasis(1));
    const auto naive = loo_msp(obs, spline_method(ridge, 1.0));
    EXPECT_LE(testkit::relative_gap(fast.msp, naive.msp), 1e-9);
    for (std::size_t j = 0; j < obs.size(); ++j) {
      EXPECT_LE(testkit::relative_gap(fast.records[j].prediction, naive.records[j].prediction),
                1e-9);
      EXPECT_LE(testkit::relative_gap(fast.records[j].sigma, naive.records[j].sigma), 1e-9);
    }
  }
}

TEST(LooFast, PermutationInvariance) {
  testkit::Rng rng(7);
  const auto obs = random_obs(rng, 25);
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::swap(order[3], order[11]);
  std::vector<Site> sites;
  std::vector<double> values;
  for (auto i : order) {
    sites.push_back(obs.site(i));
    values.push_back(obs.value(i));
  }
  const Observations permuted(sites, values);
  const GaussianCovariogram m(0.4, 2.0, 1.2);
  EXPECT_NEAR(loo_fast(obs, m, DriftBasis(1)).msp, loo_fast(permuted, m, DriftBasis(1)).msp,
              1e-12);
  EXPECT_NEAR(loo_fast(obs, TpsGeneralizedCovariance{0.7}, DriftBasis(1)).msp,
              loo_fast(permuted, TpsGeneralizedCovariance{0.7}, DriftBasis(1)).msp, 1e-12);
}

TEST(LooFast, CalibratedUnderTheTrueModel) {
  const GaussianCovariogram truth(0.5, 4, 2);
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sites = random_sites(50, {0, 10, 0, 10}, seed * 31 + 5);
    const auto obs = simulate_field({truth, std::nullopt, seed + 1000}, sites);
    const double msp = loo_fast(obs, truth, DriftBasis(0)).msp;
    if (msp >= 0.8 && msp <= 1.2) ++inside;
  }
  EXPECT_GE(inside, 18);
}

TEST(DecideWinner, ToleranceAndOrdering) {
  EXPECT_EQ(decide_winner(0.5, 0.7), Winner::kriging);
  EXPECT_EQ(decide_winner(0.7, 0.5), Winner::spline);
  EXPECT_EQ(decide_winner(0.5, 0.5 + 1e-13), Winner::tie);
  EXPECT_STREQ(to_string(Winner::tie), "tie");
}

TEST(CompareMethods, OracleStubsTie) {
  testkit::Rng rng(8);
  const auto obs = random_obs(rng, 15);
  const auto r = compare_with_methods(obs, oracle_method(obs), oracle_method(obs));
  EXPECT_EQ(r.msp_kriging, 0.0);
  EXPECT_EQ(r.msp_spline, 0.0);
  EXPECT_EQ(r.winner, Winner::tie);
}

TEST(CompareMethods, ReportIsConsistentAndDeterministic) {
  const auto obs = simulated(3, 60);
  const auto a = compare_methods(obs);
  const auto b = compare_methods(obs);
  EXPECT_EQ(a.msp_kriging, b.msp_kriging);
  EXPECT_EQ(a.msp_spline, b.msp_spline);
  EXPECT_EQ(a.winner, decide_winner(a.msp_kriging, a.msp_spline));
  EXPECT_EQ(a.msp_kriging, msp_from_records(a.kriging_records));
  EXPECT_EQ(a.msp_spline, msp_from_records(a.spline_records));
  ASSERT_TRUE(a.covariogram.has_value());
  ASSERT_TRUE(a.spline.has_value());
  EXPECT_TRUE(a.spline->selected_by_gcv);
  for (const auto* recs : {&a.kriging_records, &a.spline_records}) {
    ASSERT_EQ(recs->size(), obs.size());
    for (const auto& r : *recs) {
      EXPECT_EQ(r.truth, obs.value(r.site_index));
      EXPECT_GT(r.sigma, 0.0);
      EXPECT_EQ(r.standardized_residual, (r.truth - r.prediction) / r.sigma);
    }
  }
}

TEST(CompareMethods, KrigingWinsOnGaussianFields) {
  int kriging = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    if (compare_methods(simulated(seed, 60)).winner == Winner::kriging) ++kriging;
  EXPECT_GE(kriging, 15);
}

TEST(CompareMethods, FixedPolicyMatchesNaiveFactories) {
  const auto obs = simulated(4, 30);
  const auto r = compare_methods(obs, {}, {});
  const auto naive = compare_with_methods(
      obs, kriging_method(*r.covariogram, DriftBasis(0)),
      spline_method(static_cast<double>(obs.size()) * r.spline->alpha, 1.0));
  EXPECT_LE(testkit::relative_gap(r.msp_kriging, naive.msp_kriging), 1e-9);
  EXPECT_LE(testkit::relative_gap(r.msp_spline, naive.msp_spline), 1e-9);
}

TEST(CompareMethods, StrictPolicyAndTrend) {
  const auto base = simulated(5, 24);
  std::vector<double> v(base.values().begin(), base.values().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 10.0 + base.site(i).x - 0.5 * base.site(i).y;
  const auto obs = base.with_values(v);

  KrigingConfig k;
  k.refit = RefitPolicy::strict;
  k.drift_degree = 1;
  SplineConfig s;
  s.refit = RefitPolicy::strict;
  s.variance_scale = SplineVarianceScale::reml;
  TrendConfig t;
  t.enabled = true;
  const auto r = compare_methods(obs, k, s, t);
  EXPECT_TRUE(r.trend.enabled);
  EXPECT_EQ(r.trend.rows, default_table_size(obs.size()));
  EXPECT_EQ(r.kriging_refit, RefitPolicy::strict);
  EXPECT_EQ(r.winner, decide_winner(r.msp_kriging, r.msp_spline));
  for (const auto& rec : r.kriging_records) EXPECT_EQ(rec.truth, obs.value(rec.site_index));
  EXPECT_TRUE(std::isfinite(r.msp_kriging));
  EXPECT_TRUE(std::isfinite(r.msp_spline));
}

TEST(CompareMethods, ErrorsCarryTheirStage) {
  testkit::Rng rng(9);
  const auto flat = random_obs(rng, 20).with_values(std::vector<double>(20, 1.0));
  try {
    compare_methods(flat);
    FAIL() << "expected DegenerateVariogram";
  } catch (const DegenerateVariogram& e) {
    EXPECT_EQ(e.stage(), "variogram");
  }
  EXPECT_THROW(compare_methods(random_obs(rng, 7)), InvalidArgument);

  const auto line = Observations({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}, {6, 0}, {7, 0}},
                                 {1, 3, 2, 5, 4, 6, 5, 8});
  KrigingConfig k;
  k.model = GaussianCovariogram(0.5, 1, 1);
  try {
    compare_methods(line, k);
    FAIL() << "expected CollinearSites";
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "spline-fit");
  }
}
