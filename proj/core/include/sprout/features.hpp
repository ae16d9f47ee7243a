#pragma once

#include "sprout/preprocess.hpp"
#include "sprout/wavelet.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sprout {

struct Dataset;
struct Manifest;
struct Recording;
struct PipelineConfig;

// Per-scale descriptor. Field order here is the frozen column order inside
// each scale block of a FeatureVector.
struct ScaleFeatures {
  double energy = 0.0;
  double p5 = 0.0;
  double p25 = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double p75 = 0.0;
  double p95 = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  double entropy = 0.0; // nats
  long zero_crossings = 0;
  long mean_crossings = 0;

  static constexpr std::size_t kCount = 13;
  static const std::array<const char*, kCount>& names();
  std::array<double, kCount> to_array() const;
};

inline constexpr std::size_t kFeaturesPerScale = ScaleFeatures::kCount;
inline constexpr int kDefaultEntropyBins = 64;

// Requires at least 2 finite samples.
ScaleFeatures extract_scale_features(std::span<const double> values,
                                     int entropy_bins = kDefaultEntropyBins);

// Linear interpolation between closest ranks on sorted data, p in [0, 100].
double percentile_sorted(std::span<const double> sorted, double p);

// Identifies the column layout a model was trained against.
struct FeatureLayout {
  std::size_t blocks = 0; // K scales, or 1 in time-domain mode
  bool time_domain = false;

  std::size_t width() const { return blocks * kFeaturesPerScale; }
  std::string version() const;
  bool operator==(const FeatureLayout&) const = default;
};

FeatureLayout parse_feature_layout(const std::string& version);

struct FeatureVector {
  std::string subject_id;
  int window_index = 1;
  int day_offset = 0;
  std::vector<double> values;
};

struct LabeledExample {
  FeatureVector features;
  double target_days = 0.0;
};

FeatureVector build_feature_vector(const TransformedWindow& tw, const ScalePlan& plan,
                                   int entropy_bins = kDefaultEntropyBins);

// Time-domain mode: the same descriptor taken over the raw window.
FeatureVector build_time_domain_vector(const SignalWindow& window,
                                       int entropy_bins = kDefaultEntropyBins);

// Turns recordings into feature vectors. Holds one CWT engine per window
// length, so reuse an extractor across subjects.
class FeatureExtractor {
public:
  explicit FeatureExtractor(const PipelineConfig& config);
  ~FeatureExtractor();
  FeatureExtractor(FeatureExtractor&&) noexcept;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept;

  FeatureLayout layout() const;
  // Windows of the conditioned recording, in window order.
  std::vector<FeatureVector> extract(const Recording& recording);
  // Visits each transformed window before reduction (scalogram dumps).
  std::vector<FeatureVector> extract(const Recording& recording,
                                     const std::function<void(const TransformedWindow&)>& visit);

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ExampleTable {
  FeatureLayout layout;
  std::vector<LabeledExample> examples;        // sorted by subject_id, window_index
  std::map<std::string, int> windows_per_subject; // M_j
  std::map<std::string, int> sprouting_offsets;   // D_j in days
};

// One example per window with day_offset <= D_j; target = D_j - d_i.
std::vector<LabeledExample> label_windows(std::vector<FeatureVector> vectors,
                                          int sprouting_offset);

ExampleTable build_dataset(const Dataset& dataset, const PipelineConfig& config);
// Loads each recording inside the worker that reduces it, so only `jobs`
// recordings are resident at once.
ExampleTable build_dataset(const Manifest& manifest, const PipelineConfig& config);

} // namespace sprout
