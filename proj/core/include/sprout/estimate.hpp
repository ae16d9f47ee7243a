#pragma once

#include "sprout/features.hpp"
#include "sprout/regress.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sprout {

// Per-window sprouting-day estimate d_hat = day_offset + y_hat.
struct WindowEstimate {
  std::string subject_id;
  int window_index = 1;
  int day_offset = 0;
  double y_hat = 0.0;
  double d_hat = 0.0;
  std::optional<double> ci_halfwidth;
  bool retained = true;
};

struct SubjectEstimate {
  std::string subject_id;
  int observation_day = 0;
  double d_hat = 0.0;
  int n_windows_used = 0;
  bool fallback_used = false;
};

// A window survives when its full 95 % CI width 2 * halfwidth is <= uq_th.
bool passes_uq(double ci_halfwidth, double uq_th);

WindowEstimate make_window_estimate(const FeatureVector& fv, double y_hat,
                                    std::optional<double> ci_halfwidth,
                                    std::optional<double> uq_th);

// Single model: every window is retained.
std::vector<WindowEstimate> window_estimates(const TrainedModel& model,
                                             std::span<const FeatureVector> features);

// Ensemble: y_hat is the member mean and uq_th is required (PreconditionError
// otherwise). Pass +inf to keep every window.
std::vector<WindowEstimate> window_estimates(const Ensemble& ensemble,
                                             std::span<const FeatureVector> features,
                                             std::optional<double> uq_th);

// Re-applies the retention rule for another threshold.
std::vector<WindowEstimate> refilter(std::vector<WindowEstimate> estimates, double uq_th);

// Mean of retained d_hat over windows with day_offset < observation_day. When
// nothing is retained, falls back to the window with the narrowest CI.
// Throws PreconditionError when no window precedes observation_day.
SubjectEstimate aggregate(std::span<const WindowEstimate> estimates, int observation_day);

// Trailing mean over min(n, available) values; output length equals input.
std::vector<double> rolling_mean(std::span<const double> series, std::size_t n);

} // namespace sprout
