#pragma once

#include "sprout/features.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace sprout {

struct RegressorSpec {
  int n_trees = 300;
  int max_depth = 4;
  double learning_rate = 0.05;
  int min_samples_leaf = 5;
  double subsample = 0.8;
  std::uint64_t seed = 0;

  // Throws ConfigError when a bound is violated.
  void validate() const;
  bool operator==(const RegressorSpec&) const = default;
};

// Flattened binary tree; node 0 is the root. A node with feature < 0 is a
// leaf. Rows with x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double evaluate(std::span<const double> x) const;
  std::size_t depth() const;
  bool operator==(const RegressionTree&) const = default;
};

// Gradient-boosted regression trees on squared error. Predictions are in
// days until sprouting.
struct TrainedModel {
  RegressorSpec spec;
  FeatureLayout layout;
  double base_prediction = 0.0;
  std::vector<RegressionTree> trees;

  // Throws DataError on a feature-width mismatch.
  double predict(std::span<const double> x) const;
  double predict(const FeatureVector& features) const;
  bool operator==(const TrainedModel&) const = default;
};

// Training mean squared error after the base prediction and after each stage.
struct FitTrace {
  std::vector<double> training_mse;
};

TrainedModel fit(std::span<const LabeledExample> examples, const RegressorSpec& spec,
                 const FeatureLayout& layout, FitTrace* trace = nullptr);

struct Ensemble {
  std::vector<TrainedModel> members;
  // Member index for each training example, in input order.
  std::vector<int> subset_assignment;

  const FeatureLayout& layout() const { return members.front().layout; }
  bool operator==(const Ensemble&) const = default;
};

inline constexpr int kDefaultEnsembleSize = 10;

// Seeded shuffle, then position p goes to member p % n_members.
std::vector<int> partition_examples(std::size_t n_examples, int n_members, std::uint64_t seed);

// Member u is trained with seed + u on its own subset.
Ensemble fit_ensemble(std::span<const LabeledExample> examples, const RegressorSpec& spec,
                      const FeatureLayout& layout, int n_members = kDefaultEnsembleSize,
                      std::uint64_t seed = 0, int jobs = 1);

struct EnsemblePrediction {
  double mean = 0.0;
  double ci_halfwidth = 0.0; // half-width of the two-sided 95 % t-interval
};

// Two-sided 95 % Student-t critical value, tabulated to three decimals.
double t_critical_975(int dof);

// Mean and 95 % CI half-width t * s / sqrt(n) of a sample of predictions.
EnsemblePrediction summarize_predictions(std::span<const double> predictions);

EnsemblePrediction ensemble_predict(const Ensemble& ensemble, std::span<const double> x);
EnsemblePrediction ensemble_predict(const Ensemble& ensemble, const FeatureVector& features);

using ModelFile = std::variant<TrainedModel, Ensemble>;

std::string to_json_string(const TrainedModel& model);
std::string to_json_string(const Ensemble& ensemble);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);
ModelFile parse_model(const std::string& json_text);

} // namespace sprout
