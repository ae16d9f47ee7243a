#pragma once

#include "sprout/preprocess.hpp"
#include "sprout/regress.hpp"
#include "sprout/wavelet.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sprout {

enum class Strategy { single, ensemble };

std::string to_string(Strategy strategy);
Strategy parse_strategy(const std::string& text);

struct EvaluationOptions {
  double bin_width = 5.0;
  int rolling_n = 7;
  int tlag_min = -29;
  int tlag_max = 0;
  double percentile_step = 1.0;
  int low_support_count = 10;
  std::vector<double> uq_sweep; // extra UQ_th values reported for the ensemble strategy
};

// Every knob of the pipeline. Defaults are the documented ones; a config
// file overrides them and command-line flags override the file.
struct PipelineConfig {
  ChainConfig chain;
  int window_seconds = 86400;

  std::size_t scales = 8;
  std::string wavelet = "morlet";
  double omega0 = 6.0;
  std::optional<std::pair<double, double>> band_hz;

  int entropy_bins = 64;
  bool time_domain = false;

  RegressorSpec regressor;
  Strategy strategy = Strategy::single;
  std::optional<double> uq_th; // maximum 95 % CI full width, days
  int n_members = kDefaultEnsembleSize;
  std::uint64_t seed = 0;
  int jobs = 1;

  EvaluationOptions evaluation;

  // Throws ConfigError.
  void validate() const;
};

// Samples per window after conditioning.
std::size_t window_length(const PipelineConfig& config);
ScalePlan scale_plan(const PipelineConfig& config);
FeatureLayout feature_layout(const PipelineConfig& config);

// INI dialect: `[section]` headers, `key = value` lines, `#` or `;` comments.
// Sections: preprocess, wavelet, features, regress, estimate, evaluate, run.
// Lists are comma separated. Unknown sections or keys are a ConfigError.
// Returns the "section.key" names that were set.
std::set<std::string> apply_config_text(const std::string& text, PipelineConfig& config,
                                        const std::string& origin = "<config>");
std::set<std::string> apply_config_file(const std::filesystem::path& path,
                                        PipelineConfig& config);

// Fully resolved configuration as pretty-printed JSON.
std::string config_to_json(const PipelineConfig& config);

} // namespace sprout
