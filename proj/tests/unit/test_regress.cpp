#include "oracles.hpp"

#include "sprout/error.hpp"
#include "sprout/regress.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <random>

namespace sprout {
namespace {

const FeatureLayout kOneBlock{1, true};

std::vector<LabeledExample> uniform_examples(std::size_t n, std::uint64_t seed,
                                             double (*target)(const std::vector<double>&)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabeledExample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& ex = out[i];
    ex.features.subject_id = "s" + std::to_string(i % 7);
    ex.features.window_index = static_cast<int>(i) + 1;
    ex.features.values.resize(kOneBlock.width());
    for (auto& v : ex.features.values) {
      v = u(rng);
    }
    ex.target_days = target(ex.features.values);
  }
  return out;
}

double twice_first(const std::vector<double>& x) { return 2.0 * x[0]; }

TEST(Spec, Validation) {
  RegressorSpec s;
  EXPECT_NO_THROW(s.validate());
  s.n_trees = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.learning_rate = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.subsample = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.max_depth = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Fit, ConstantTargetPredictsConstant) {
  auto ex = uniform_examples(60, 1, [](const std::vector<double>&) { return 12.5; });
  const auto model = fit(ex, RegressorSpec{}, kOneBlock);
  for (const auto& e : ex) {
    EXPECT_NEAR(model.predict(e.features), 12.5, 1e-9);
  }
  std::vector<double> other(kOneBlock.width(), 42.0);
  EXPECT_NEAR(model.predict(other), 12.5, 1e-9);
}

TEST(Fit, LearnsLinearFunction) {
  const auto ex = uniform_examples(500, 2, twice_first);
  RegressorSpec spec;
  spec.n_trees = 200;
  spec.max_depth = 3;
  spec.learning_rate = 0.1;
  const auto model = fit(ex, spec, kOneBlock);

  double mean = 0.0;
  for (const auto& e : ex) {
    mean += e.target_days;
  }
  mean /= static_cast<double>(ex.size());
  double var = 0.0;
  double mae = 0.0;
  for (const auto& e : ex) {
    var += (e.target_days - mean) * (e.target_days - mean);
    mae += std::abs(model.predict(e.features) - e.target_days);
  }
  const double sd = std::sqrt(var / static_cast<double>(ex.size()));
  mae /= static_cast<double>(ex.size());
  EXPECT_LT(mae, 0.1 * sd);

  std::vector<double> probe(kOneBlock.width(), 0.5);
  probe[0] = 0.3;
  EXPECT_NEAR(model.predict(probe), 0.6, 0.15);
}

// Brute-force best single split over every feature and cut position by SSE.
struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double left_mean = 0.0;
  double right_mean = 0.0;
};

Split exhaustive_split(const std::vector<LabeledExample>& ex, std::size_t width) {
  Split best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < width; ++f) {
    std::vector<double> cuts;
    for (const auto& e : ex) {
      cuts.push_back(e.features.values[f]);
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      if (cuts[c] == cuts[c + 1]) {
        continue;
      }
      const double thr = 0.5 * (cuts[c] + cuts[c + 1]);
      double sl = 0, sr = 0;
      int nl = 0, nr = 0;
      for (const auto& e : ex) {
        if (e.features.values[f] <= thr) {
          sl += e.target_days;
          ++nl;
        } else {
          sr += e.target_days;
          ++nr;
        }
      }
      const double ml = sl / nl;
      const double mr = sr / nr;
      double sse = 0.0;
      for (const auto& e : ex) {
        const double m = e.features.values[f] <= thr ? ml : mr;
        sse += (e.target_days - m) * (e.target_days - m);
      }
      if (sse < best_sse - 1e-12) {
        best_sse = sse;
        best = Split{f, thr, ml, mr};
      }
    }
  }
  return best;
}

TEST(Fit, StumpMatchesExhaustiveSplitSearch) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    auto ex = uniform_examples(80, seed, [](const std::vector<double>& x) {
      return (x[3] > 0.4 ? 9.0 : 1.0) + 0.3 * x[7];
    });
    RegressorSpec spec;
    spec.n_trees = 1;
    spec.max_depth = 1;
    spec.learning_rate = 1.0;
    spec.min_samples_leaf = 1;
    spec.subsample = 1.0;
    const auto model = fit(ex, spec, kOneBlock);
    const auto want = exhaustive_split(ex, kOneBlock.width());
    ASSERT_EQ(model.trees.size(), 1u);
    const auto& root = model.trees[0].nodes[0];
    EXPECT_EQ(static_cast<std::size_t>(root.feature), want.feature);
    EXPECT_EQ(want.feature, 3u);
    EXPECT_NEAR(root.threshold, want.threshold, 1e-12);
    for (const auto& e : ex) {
      const double m = e.features.values[want.feature] <= want.threshold ? want.left_mean
                                                                          : want.right_mean;
      EXPECT_NEAR(model.predict(e.features), m, 1e-9);
    }
  }
}

TEST(Fit, TreesRespectDepthAndLeafSize) {
  const auto ex = uniform_examples(300, 4, twice_first);
  RegressorSpec spec;
  spec.n_trees = 20;
  spec.max_depth = 3;
  spec.min_samples_leaf = 20;
  const auto model = fit(ex, spec, kOneBlock);
  for (const auto& t : model.trees) {
    EXPECT_LE(t.depth(), 3u);
  }
}

TEST(Fit, TrainingLossNeverIncreasesWithoutSubsampling) {
  const auto ex = uniform_examples(400, 5, [](const std::vector<double>& x) {
    return 30.0 * x[0] * x[1] + 5.0 * std::sin(6.0 * x[2]);
  });
  RegressorSpec spec;
  spec.subsample = 1.0;
  spec.n_trees = 100;
  FitTrace trace;
  fit(ex, spec, kOneBlock, &trace);
  ASSERT_EQ(trace.training_mse.size(), 101u);
  for (std::size_t i = 1; i < trace.training_mse.size(); ++i) {
    EXPECT_LE(trace.training_mse[i], trace.training_mse[i - 1] * (1.0 + 1e-12)) << i;
  }
  EXPECT_LT(trace.training_mse.back(), 0.2 * trace.training_mse.front());
}

TEST(Fit, SameSeedGivesIdenticalModelFiles) {
  const auto ex = uniform_examples(200, 6, twice_first);
  RegressorSpec spec;
  spec.n_trees = 30;
  spec.seed = 99;
  const auto a = fit(ex, spec, kOneBlock);
  const auto b = fit(ex, spec, kOneBlock);
  EXPECT_EQ(to_json_string(a), to_json_string(b));
  spec.seed = 100;
  EXPECT_NE(to_json_string(fit(ex, spec, kOneBlock)), to_json_string(a));
}

TEST(Fit, RejectsBadInput) {
  auto ex = uniform_examples(10, 7, twice_first);
  EXPECT_THROW(fit(std::span(ex).first(1), RegressorSpec{}, kOneBlock), PreconditionError);
  ex[3].features.values[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fit(ex, RegressorSpec{}, kOneBlock), DataError);
}

TEST(Predict, WidthMismatchIsDataError) {
  const auto model = fit(uniform_examples(50, 8, twice_first), RegressorSpec{}, kOneBlock);
  EXPECT_THROW(model.predict(std::vector<double>(26, 0.0)), DataError);
}

TEST(ModelFile, RoundTrip) {
  testing::TempDir dir("regress");
  RegressorSpec spec;
  spec.n_trees = 15;
  const auto ex = uniform_examples(120, 9, twice_first);
  const auto model = fit(ex, spec, kOneBlock);
  save_model(dir.path() / "m.json", model);
  const auto loaded = std::get<TrainedModel>(load_model(dir.path() / "m.json"));
  EXPECT_EQ(loaded, model);

  const auto ens = fit_ensemble(ex, spec, kOneBlock, 10, 3);
  save_model(dir.path() / "e.json", ens);
  const auto back = std::get<Ensemble>(load_model(dir.path() / "e.json"));
  EXPECT_EQ(back.members, ens.members);
  EXPECT_THROW(parse_model("{\"format\":\"nope\"}"), DataError);
  EXPECT_THROW(parse_model("not json"), DataError);
  EXPECT_THROW(load_model(dir.path() / "missing.json"), InputError);
}

TEST(Ensemble, PartitionIsBalancedAndSeeded) {
  const auto a = partition_examples(100, 10, 1);
  ASSERT_EQ(a.size(), 100u);
  std::vector<int> counts(10, 0);
  for (int m : a) {
    ASSERT_GE(m, 0);
    ASSERT_LT(m, 10);
    ++counts[static_cast<std::size_t>(m)];
  }
  for (int c : counts) {
    EXPECT_EQ(c, 10);
  }
  EXPECT_EQ(partition_examples(100, 10, 1), a);
  EXPECT_NE(partition_examples(100, 10, 2), a);
}

TEST(Ensemble, TooFewExamplesIsAnError) {
  const auto ex = uniform_examples(9, 11, twice_first);
  EXPECT_THROW(fit_ensemble(ex, RegressorSpec{}, kOneBlock, 10, 0), PreconditionError);
}

TEST(Ensemble, MembersTrainOnDisjointSubsets) {
  const auto ex = uniform_examples(200, 12, twice_first);
  RegressorSpec spec;
  spec.n_trees = 10;
  const auto ens = fit_ensemble(ex, spec, kOneBlock, 10, 5);
  ASSERT_EQ(ens.members.size(), 10u);
  EXPECT_EQ(ens.subset_assignment, partition_examples(200, 10, 5));
  for (std::size_t u = 0; u < ens.members.size(); ++u) {
    EXPECT_EQ(ens.members[u].spec.seed, 5u + u);
  }
  const auto parallel = fit_ensemble(ex, spec, kOneBlock, 10, 5, 4);
  EXPECT_EQ(parallel, ens);
}

TEST(Ensemble, IntervalOfIdenticalPredictionsIsZero) {
  const std::vector<double> p(10, 20.0);
  const auto s = summarize_predictions(p);
  EXPECT_EQ(s.mean, 20.0);
  EXPECT_EQ(s.ci_halfwidth, 0.0);
}

TEST(Ensemble, IntervalHandExample) {
  const std::vector<double> p{18, 19, 20, 21, 22, 18, 19, 20, 21, 22};
  const auto s = summarize_predictions(p);
  EXPECT_DOUBLE_EQ(s.mean, 20.0);
  const double sd = std::sqrt(20.0 / 9.0);
  EXPECT_NEAR(sd, 1.49, 0.005);
  EXPECT_NEAR(s.ci_halfwidth, 2.262 * sd / std::sqrt(10.0), 1e-12);
  EXPECT_NEAR(s.ci_halfwidth, 1.07, 0.005);
}

TEST(Ensemble, CriticalValues) {
  EXPECT_DOUBLE_EQ(t_critical_975(9), 2.262);
  EXPECT_DOUBLE_EQ(t_critical_975(1), 12.706);
  EXPECT_NEAR(t_critical_975(100000), 1.96, 0.005);
  for (int d = 2; d < 200; ++d) {
    EXPECT_LE(t_critical_975(d), t_critical_975(d - 1));
  }
  EXPECT_THROW(t_critical_975(0), PreconditionError);
  EXPECT_THROW(summarize_predictions(std::vector<double>{1.0}), PreconditionError);
}

} // namespace
} // namespace sprout
