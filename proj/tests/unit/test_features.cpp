#include "oracles.hpp"

#include "sprout/config.hpp"
#include "sprout/error.hpp"
#include "sprout/features.hpp"
#include "sprout/ingest.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

namespace sprout {
namespace {

TEST(ScaleFeatures, ConstantSequence) {
  const std::vector<double> x{3, 3, 3, 3};
  const auto f = extract_scale_features(x);
  EXPECT_EQ(f.energy, 36.0);
  for (double v : {f.p5, f.p25, f.median, f.mean, f.p75, f.p95, f.min, f.max}) {
    EXPECT_EQ(v, 3.0);
  }
  EXPECT_EQ(f.std, 0.0);
  EXPECT_EQ(f.entropy, 0.0);
  EXPECT_EQ(f.zero_crossings, 0);
  EXPECT_EQ(f.mean_crossings, 0);
}

TEST(ScaleFeatures, Alternating) {
  const std::vector<double> x{1, -1, 1, -1};
  const auto f = extract_scale_features(x);
  EXPECT_EQ(f.zero_crossings, 3);
  EXPECT_EQ(f.mean_crossings, 3);
  EXPECT_EQ(f.mean, 0.0);
  EXPECT_EQ(f.energy, 4.0);
  EXPECT_EQ(f.std, 1.0);
}

TEST(ScaleFeatures, UniformSampleEntropyAndTail) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(1000);
  for (auto& v : x) {
    v = u(rng);
  }
  const auto f = extract_scale_features(x);
  EXPECT_NEAR(f.entropy, std::log(64.0), 0.1 * std::log(64.0));
  EXPECT_GE(f.p5, 0.02);
  EXPECT_LE(f.p5, 0.08);
}

TEST(ScaleFeatures, TouchingSamplesDoNotCross) {
  // 0 is neither sign, so 1 -> 0 -> 1 has no strict sign change.
  const auto f = extract_scale_features(std::vector<double>{1, 0, 1, -1});
  EXPECT_EQ(f.zero_crossings, 1);
}

TEST(ScaleFeatures, SamplesOnTheMeanStayOnItAfterScaling) {
  // Exact mean 0; after scaling, the summed mean picks up rounding error.
  const std::vector<double> x{-3, 0, 3, 0, -1, 1, 0, 2, -2, 0, 3, -3};
  const auto base = extract_scale_features(x);
  for (double c : {0.1, 0.7, 1.3, 1e-7, 3e5}) {
    std::vector<double> y(x);
    for (auto& v : y) {
      v *= c;
    }
    EXPECT_EQ(extract_scale_features(y).mean_crossings, base.mean_crossings) << c;
  }
  EXPECT_EQ(base.mean_crossings, base.zero_crossings);
}

TEST(ScaleFeatures, PercentileInterpolation) {
  const std::vector<double> sorted{10, 20, 30, 40, 50};
  EXPECT_DOUBLE_EQ(percentile_sorted(sorted, 0), 10);
  EXPECT_DOUBLE_EQ(percentile_sorted(sorted, 100), 50);
  EXPECT_DOUBLE_EQ(percentile_sorted(sorted, 50), 30);
  EXPECT_DOUBLE_EQ(percentile_sorted(sorted, 5), 12);
  EXPECT_DOUBLE_EQ(percentile_sorted(sorted, 62.5), 35);
}

TEST(ScaleFeatures, RejectsShortOrNonFinite) {
  EXPECT_THROW(extract_scale_features(std::vector<double>{1.0}), PreconditionError);
  EXPECT_THROW(extract_scale_features(std::vector<double>{1.0, NAN}), PreconditionError);
}

TEST(ScaleFeatures, FuzzInvariants) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(2, 300);
  std::uniform_int_distribution<int> kind(0, 3);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = len(rng);
    std::vector<double> x(static_cast<std::size_t>(n));
    switch (kind(rng)) {
    case 0: {
      std::normal_distribution<double> g(0.0, 5.0);
      for (auto& v : x) {
        v = g(rng);
      }
      break;
    }
    case 1: {
      std::exponential_distribution<double> e(0.3);
      for (auto& v : x) {
        v = e(rng);
      }
      break;
    }
    case 2: {
      std::uniform_int_distribution<int> d(-2, 2);
      for (auto& v : x) {
        v = d(rng);
      }
      break;
    }
    default: {
      std::uniform_real_distribution<double> u(-1e6, 1e6);
      for (auto& v : x) {
        v = u(rng);
      }
    }
    }
    const auto f = extract_scale_features(x);
    ASSERT_LE(f.min, f.p5);
    ASSERT_LE(f.p5, f.p25);
    ASSERT_LE(f.p25, f.median);
    ASSERT_LE(f.median, f.p75);
    ASSERT_LE(f.p75, f.p95);
    ASSERT_LE(f.p95, f.max);
    ASSERT_GE(f.std, 0.0);
    ASSERT_GE(f.entropy, 0.0);
    double energy = 0.0;
    for (double v : x) {
      energy += v * v;
    }
    ASSERT_TRUE(testing::close_rel(f.energy, energy, 1e-9, 1e-300));
  }
}

TEST(ScaleFeatures, ShuffleKeepsDistributionalFeaturesExactly) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = testing::gaussian_noise(500, static_cast<std::uint64_t>(trial), 2.0);
    const auto a = extract_scale_features(x);
    std::shuffle(x.begin(), x.end(), rng);
    const auto b = extract_scale_features(x);
    EXPECT_EQ(a.energy, b.energy);
    EXPECT_EQ(a.p5, b.p5);
    EXPECT_EQ(a.p25, b.p25);
    EXPECT_EQ(a.median, b.median);
    EXPECT_EQ(a.p75, b.p75);
    EXPECT_EQ(a.p95, b.p95);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std, b.std);
    EXPECT_EQ(a.min, b.min);
    EXPECT_EQ(a.max, b.max);
    EXPECT_EQ(a.entropy, b.entropy);
  }
}

TEST(ScaleFeatures, CrossingsInvariantUnderPositiveScaling) {
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = testing::gaussian_noise(400, 1000 + static_cast<std::uint64_t>(trial));
    const auto a = extract_scale_features(x);
    for (double c : {1e-6, 0.5, 3.0, 1e8}) {
      std::vector<double> y(x);
      for (auto& v : y) {
        v *= c;
      }
      const auto b = extract_scale_features(y);
      EXPECT_EQ(a.zero_crossings, b.zero_crossings);
      EXPECT_EQ(a.mean_crossings, b.mean_crossings);
    }
  }
}

TEST(FeatureVector, LayoutWidthAndOrder) {
  const FeatureLayout layout{8, false};
  EXPECT_EQ(layout.width(), 8 * kFeaturesPerScale);
  EXPECT_EQ(parse_feature_layout(layout.version()), layout);
  const FeatureLayout td{1, true};
  EXPECT_EQ(parse_feature_layout(td.version()), td);
  EXPECT_THROW(parse_feature_layout("something-else"), DataError);
  EXPECT_STREQ(ScaleFeatures::names().front(), "energy");
  EXPECT_STREQ(ScaleFeatures::names().back(), "mean_crossings");
}

TEST(FeatureVector, ZeroWindowBlocks) {
  TransformedWindow tw;
  tw.coefficients.assign(8, std::vector<double>(64, 0.0));
  const auto plan = plan_scales(1.0, 64, 8, 6.0, std::make_pair(0.07, 0.25));
  const auto fv = build_feature_vector(tw, plan);
  ASSERT_EQ(fv.values.size(), 8 * kFeaturesPerScale);
  for (std::size_t k = 0; k < 8; ++k) {
    const double* b = fv.values.data() + k * kFeaturesPerScale;
    EXPECT_EQ(b[0], 0.0);  // energy
    EXPECT_EQ(b[7], 0.0);  // std
    EXPECT_EQ(b[10], 0.0); // entropy
    EXPECT_EQ(b[11], 0.0); // zero crossings
    EXPECT_EQ(b[12], 0.0); // mean crossings
  }
}

TEST(FeatureVector, ChangingOneScaleTouchesOneBlock) {
  const auto plan = plan_scales(1.0, 128, 4);
  TransformedWindow a;
  for (std::size_t k = 0; k < 4; ++k) {
    a.coefficients.push_back(testing::gaussian_noise(128, k));
  }
  TransformedWindow b = a;
  b.coefficients[2] = testing::gaussian_noise(128, 99);
  const auto fa = build_feature_vector(a, plan);
  const auto fb = build_feature_vector(b, plan);
  for (std::size_t i = 0; i < fa.values.size(); ++i) {
    const bool in_block = i / kFeaturesPerScale == 2;
    if (!in_block) {
      EXPECT_EQ(fa.values[i], fb.values[i]) << i;
    }
  }
  EXPECT_NE(fa.values[2 * kFeaturesPerScale], fb.values[2 * kFeaturesPerScale]);
}

Recording recording(const std::string& id, std::size_t days, double rate, int sprout_day) {
  Recording r;
  r.subject_id = id;
  r.variety = "Agria";
  r.sample_rate_hz = rate;
  r.start_day = parse_iso_date("2024-10-01");
  r.sprouting_day = add_days(r.start_day, sprout_day);
  r.samples = testing::gaussian_noise(
      static_cast<std::size_t>(static_cast<double>(days) * 86400.0 * rate), 5);
  return r;
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.chain.target_hz = 1.0 / 600.0; // 144 samples per day
  c.scales = 4;
  return c;
}

TEST(Labeling, TargetsCountDownToSprouting) {
  const auto cfg = small_config();
  FeatureExtractor fx(cfg);
  const auto rec = recording("p01", 30, cfg.chain.target_hz, 30);
  const auto ex = label_windows(fx.extract(rec), 30);
  ASSERT_EQ(ex.size(), 30u);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    EXPECT_EQ(ex[i].target_days, 30.0 - static_cast<double>(i));
    EXPECT_EQ(ex[i].features.values.size(), 4 * kFeaturesPerScale);
  }
}

TEST(Labeling, ShortSubjectContributesNothing) {
  const auto cfg = small_config();
  FeatureExtractor fx(cfg);
  auto rec = recording("p01", 1, cfg.chain.target_hz, 1);
  rec.samples.resize(100);
  EXPECT_TRUE(label_windows(fx.extract(rec), 1).empty());
}

TEST(Labeling, WindowsAfterSproutingAreDropped) {
  const auto cfg = small_config();
  FeatureExtractor fx(cfg);
  const auto ex = label_windows(fx.extract(recording("p01", 10, cfg.chain.target_hz, 10)), 6);
  ASSERT_EQ(ex.size(), 7u);
  EXPECT_EQ(ex.back().target_days, 0.0);
}

TEST(BuildDataset, SortedBySubjectThenWindow) {
  const auto cfg = small_config();
  Dataset ds;
  ds.recordings.push_back(recording("p03", 5, cfg.chain.target_hz, 5));
  ds.recordings.push_back(recording("p01", 4, cfg.chain.target_hz, 4));
  ds.recordings.push_back(recording("p02", 6, cfg.chain.target_hz, 6));
  const auto table = build_dataset(ds, cfg);
  ASSERT_EQ(table.examples.size(), 15u);
  EXPECT_EQ(table.windows_per_subject.at("p01"), 4);
  EXPECT_EQ(table.sprouting_offsets.at("p02"), 6);
  for (std::size_t i = 1; i < table.examples.size(); ++i) {
    const auto& a = table.examples[i - 1].features;
    const auto& b = table.examples[i].features;
    EXPECT_TRUE(a.subject_id < b.subject_id ||
                (a.subject_id == b.subject_id && a.window_index < b.window_index));
  }
  auto parallel_cfg = cfg;
  parallel_cfg.jobs = 3;
  const auto again = build_dataset(ds, parallel_cfg);
  ASSERT_EQ(again.examples.size(), table.examples.size());
  for (std::size_t i = 0; i < table.examples.size(); ++i) {
    EXPECT_EQ(again.examples[i].features.values, table.examples[i].features.values);
  }
}

TEST(BuildDataset, RequiresGroundTruth) {
  const auto cfg = small_config();
  Dataset ds;
  ds.recordings.push_back(recording("p01", 3, cfg.chain.target_hz, 3));
  ds.recordings.back().sprouting_day.reset();
  EXPECT_THROW(build_dataset(ds, cfg), DataError);
}

TEST(TimeDomain, SingleBlock) {
  auto cfg = small_config();
  cfg.time_domain = true;
  FeatureExtractor fx(cfg);
  EXPECT_EQ(fx.layout(), (FeatureLayout{1, true}));
  const auto v = fx.extract(recording("p01", 2, cfg.chain.target_hz, 2));
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v.front().values.size(), kFeaturesPerScale);
}

} // namespace
} // namespace sprout
