#include "oracles.hpp"

#include "sprout/error.hpp"
#include "sprout/estimate.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>

namespace sprout {
namespace {

FeatureVector window(int day, const std::string& id = "p01") {
  FeatureVector fv;
  fv.subject_id = id;
  fv.window_index = day + 1;
  fv.day_offset = day;
  return fv;
}

WindowEstimate estimate(int day, double y_hat, std::optional<double> hw = std::nullopt,
                        std::optional<double> th = std::nullopt) {
  return make_window_estimate(window(day), y_hat, hw, th);
}

TEST(WindowEstimate, DayPlusPrediction) {
  const auto e = estimate(5, 10.0);
  EXPECT_EQ(e.d_hat, 15.0);
  EXPECT_TRUE(e.retained);
  EXPECT_EQ(e.window_index, 6);
}

TEST(WindowEstimate, WideIntervalIsDiscarded) {
  EXPECT_FALSE(estimate(0, 10.0, 3.0, 4.0).retained);
  EXPECT_TRUE(estimate(0, 10.0, 2.0, 4.0).retained);
  EXPECT_TRUE(estimate(0, 10.0, 3.0, 6.0).retained);
  EXPECT_TRUE(estimate(0, 10.0, 1e12, std::numeric_limits<double>::infinity()).retained);
  EXPECT_TRUE(passes_uq(3.0, 6.0));
  EXPECT_FALSE(passes_uq(3.0, 5.999));
}

TEST(WindowEstimate, EnsembleNeedsThreshold) {
  std::vector<LabeledExample> ex(40);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    ex[i].features.subject_id = "t";
    ex[i].features.values = testing::gaussian_noise(kFeaturesPerScale, i);
    ex[i].target_days = ex[i].features.values[0] * 3.0 + 10.0;
  }
  RegressorSpec spec;
  spec.n_trees = 20;
  spec.min_samples_leaf = 2;
  const FeatureLayout layout{1, true};
  const auto ens = fit_ensemble(ex, spec, layout, 10, 1);
  std::vector<FeatureVector> fvs;
  for (int d = 0; d < 5; ++d) {
    auto fv = window(d);
    fv.values = testing::gaussian_noise(kFeaturesPerScale, 100 + static_cast<std::uint64_t>(d));
    fvs.push_back(fv);
  }
  EXPECT_THROW(window_estimates(ens, fvs, std::nullopt), PreconditionError);

  // An unbounded threshold keeps everything and uses the member mean.
  const auto all = window_estimates(ens, fvs, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < fvs.size(); ++i) {
    EXPECT_TRUE(all[i].retained);
    const auto p = ensemble_predict(ens, fvs[i]);
    EXPECT_EQ(all[i].y_hat, p.mean);
    EXPECT_EQ(all[i].d_hat, fvs[i].day_offset + p.mean);
    ASSERT_TRUE(all[i].ci_halfwidth);
    EXPECT_EQ(*all[i].ci_halfwidth, p.ci_halfwidth);
  }
}

TEST(Aggregate, MeanOfRetained) {
  const std::vector<WindowEstimate> e{estimate(0, 10.0), estimate(1, 19.0), estimate(2, 28.0)};
  const auto s = aggregate(e, 100);
  EXPECT_DOUBLE_EQ(s.d_hat, 20.0);
  EXPECT_EQ(s.n_windows_used, 3);
  EXPECT_FALSE(s.fallback_used);
  EXPECT_EQ(s.subject_id, "p01");
}

TEST(Aggregate, SkipsDiscardedWindows) {
  const std::vector<WindowEstimate> e{estimate(0, 10.0, 1.0, 4.0), estimate(1, 50.0, 5.0, 4.0),
                                      estimate(2, 8.0, 0.5, 4.0)};
  const auto s = aggregate(e, 10);
  EXPECT_DOUBLE_EQ(s.d_hat, 10.0);
  EXPECT_EQ(s.n_windows_used, 2);
}

TEST(Aggregate, FallsBackToNarrowestInterval) {
  const std::vector<WindowEstimate> e{estimate(0, 10.0, 5.0, 1.0), estimate(1, 30.0, 3.0, 1.0),
                                      estimate(2, 40.0, 9.0, 1.0)};
  for (const auto& w : e) {
    ASSERT_FALSE(w.retained);
  }
  const auto s = aggregate(e, 10);
  EXPECT_TRUE(s.fallback_used);
  EXPECT_EQ(s.d_hat, 31.0);
  EXPECT_EQ(s.n_windows_used, 1);
}

TEST(Aggregate, NothingObservedIsAnError) {
  const std::vector<WindowEstimate> e{estimate(0, 10.0), estimate(1, 9.0)};
  EXPECT_THROW(aggregate(e, 0), PreconditionError);
  EXPECT_THROW(aggregate(std::vector<WindowEstimate>{}, 5), PreconditionError);
}

TEST(Aggregate, RejectsMixedSubjects) {
  std::vector<WindowEstimate> e{estimate(0, 1.0), estimate(1, 1.0)};
  e[1].subject_id = "p02";
  EXPECT_THROW(aggregate(e, 5), PreconditionError);
}

TEST(Aggregate, UsesExactlyWindowsBeforeObservationDay) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(20.0, 6.0);
  std::vector<WindowEstimate> e;
  for (int d = 0; d < 40; ++d) {
    e.push_back(estimate(d, g(rng)));
  }
  for (int t = 1; t <= 45; ++t) {
    const std::vector<WindowEstimate> head(e.begin(), e.begin() + std::min(t, 40));
    const auto full = aggregate(e, t);
    const auto trunc = aggregate(head, 1000);
    EXPECT_EQ(full.d_hat, trunc.d_hat) << t;
    EXPECT_EQ(full.n_windows_used, std::min(t, 40));
  }
}

TEST(Aggregate, StaysWithinRetainedRange) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> w(0.0, 6.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<WindowEstimate> e;
    for (int d = 0; d < 30; ++d) {
      e.push_back(estimate(d, u(rng), w(rng), 6.0));
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& x : e) {
      if (x.retained) {
        lo = std::min(lo, x.d_hat);
        hi = std::max(hi, x.d_hat);
      }
    }
    const auto s = aggregate(e, 30);
    if (!s.fallback_used) {
      EXPECT_GE(s.d_hat, lo);
      EXPECT_LE(s.d_hat, hi);
    }
  }
}

TEST(Refilter, RaisingThresholdNeverShrinksRetainedSet) {
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> hw(0.5);
  std::vector<WindowEstimate> e;
  for (int d = 0; d < 200; ++d) {
    e.push_back(estimate(d, 10.0, hw(rng), 0.0));
  }
  std::vector<bool> prev(e.size(), false);
  for (double th = 0.0; th <= 20.0; th += 0.25) {
    const auto r = refilter(e, th);
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (prev[i]) {
        EXPECT_TRUE(r[i].retained) << th << " " << i;
      }
      prev[i] = r[i].retained;
    }
  }
}

TEST(Aggregate, PerfectPredictorRecoversSproutingDay) {
  const int D = 47;
  std::vector<WindowEstimate> e;
  for (int d = 0; d < D; ++d) {
    e.push_back(estimate(d, static_cast<double>(D - d)));
    EXPECT_EQ(e.back().d_hat, static_cast<double>(D));
  }
  for (int t = 1; t <= D; ++t) {
    EXPECT_EQ(aggregate(e, t).d_hat, static_cast<double>(D));
  }
}

TEST(RollingMean, Examples) {
  std::vector<double> s(10);
  for (int i = 0; i < 10; ++i) {
    s[static_cast<std::size_t>(i)] = i + 1;
  }
  const auto r = rolling_mean(s, 7);
  ASSERT_EQ(r.size(), 10u);
  EXPECT_DOUBLE_EQ(r[9], 7.0);
  EXPECT_DOUBLE_EQ(r[0], 1.0);
  EXPECT_DOUBLE_EQ(r[2], 2.0);
  EXPECT_EQ(rolling_mean(s, 1), s);
  const std::vector<double> flat(12, 3.25);
  EXPECT_EQ(rolling_mean(flat, 7), flat);
  EXPECT_TRUE(rolling_mean(std::vector<double>{}, 3).empty());
  EXPECT_THROW(rolling_mean(s, 0), PreconditionError);
}

} // namespace
} // namespace sprout
