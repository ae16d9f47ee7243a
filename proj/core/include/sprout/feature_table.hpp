#pragma once

#include "sprout/features.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace sprout {

// CSV feature table: subject_id,window_index,day_offset,target_days,f_000...
// target_days is empty for windows of subjects without ground truth.
struct FeatureTable {
  FeatureLayout layout;
  std::vector<FeatureVector> rows;
  std::vector<std::optional<double>> targets; // parallel to rows
};

// Column count fixes the layout: 13 columns is the time-domain mode, any
// other multiple of 13 is K wavelet scales.
FeatureLayout layout_for_width(std::size_t width);

void write_feature_table(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_table(const std::filesystem::path& path);

FeatureTable to_feature_table(const ExampleTable& examples);
// Every row must carry a target (DataError otherwise).
ExampleTable to_example_table(const FeatureTable& table);

} // namespace sprout
