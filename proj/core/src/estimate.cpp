#include "sprout/estimate.hpp"

#include "sprout/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sprout {

bool passes_uq(double ci_halfwidth, double uq_th) { return 2.0 * ci_halfwidth <= uq_th; }

WindowEstimate make_window_estimate(const FeatureVector& fv, double y_hat,
                                    std::optional<double> ci_halfwidth,
                                    std::optional<double> uq_th) {
  WindowEstimate e;
  e.subject_id = fv.subject_id;
  e.window_index = fv.window_index;
  e.day_offset = fv.day_offset;
  e.y_hat = y_hat;
  e.d_hat = static_cast<double>(fv.day_offset) + y_hat;
  e.ci_halfwidth = ci_halfwidth;
  e.retained = !ci_halfwidth || (uq_th && passes_uq(*ci_halfwidth, *uq_th));
  return e;
}

std::vector<WindowEstimate> window_estimates(const TrainedModel& model,
                                             std::span<const FeatureVector> features) {
  std::vector<WindowEstimate> out;
  out.reserve(features.size());
  for (const auto& fv : features) {
    out.push_back(make_window_estimate(fv, model.predict(fv), std::nullopt, std::nullopt));
  }
  return out;
}

std::vector<WindowEstimate> window_estimates(const Ensemble& ensemble,
                                             std::span<const FeatureVector> features,
                                             std::optional<double> uq_th) {
  if (!uq_th) {
    throw PreconditionError("ensemble estimates need a UQ threshold (uq_th)");
  }
  if (std::isnan(*uq_th) || *uq_th < 0.0) {
    throw PreconditionError("uq_th must be non-negative");
  }
  std::vector<WindowEstimate> out;
  out.reserve(features.size());
  for (const auto& fv : features) {
    const auto p = ensemble_predict(ensemble, fv);
    out.push_back(make_window_estimate(fv, p.mean, p.ci_halfwidth, uq_th));
  }
  return out;
}

std::vector<WindowEstimate> refilter(std::vector<WindowEstimate> estimates, double uq_th) {
  for (auto& e : estimates) {
    e.retained = !e.ci_halfwidth || passes_uq(*e.ci_halfwidth, uq_th);
  }
  return estimates;
}

SubjectEstimate aggregate(std::span<const WindowEstimate> estimates, int observation_day) {
  SubjectEstimate out;
  out.observation_day = observation_day;
  if (!estimates.empty()) {
    out.subject_id = estimates.front().subject_id;
  }
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  int used = 0;
  const WindowEstimate* narrowest = nullptr;
  bool any_before = false;
  for (const auto& e : estimates) {
    if (e.subject_id != out.subject_id) {
      throw PreconditionError("aggregate expects estimates of a single subject");
    }
    if (e.day_offset >= observation_day) {
      continue;
    }
    any_before = true;
    if (e.retained) {
      sum += e.d_hat;
      lo = std::min(lo, e.d_hat);
      hi = std::max(hi, e.d_hat);
      ++used;
    }
    const double width = e.ci_halfwidth.value_or(0.0);
    if (!narrowest || width < narrowest->ci_halfwidth.value_or(0.0)) {
      narrowest = &e;
    }
  }
  if (!any_before) {
    throw PreconditionError("no windows of subject '" + out.subject_id +
                            "' precede observation day " + std::to_string(observation_day));
  }
  if (used > 0) {
    out.d_hat = std::clamp(sum / used, lo, hi);
    out.n_windows_used = used;
  } else {
    out.d_hat = narrowest->d_hat;
    out.n_windows_used = 1;
    out.fallback_used = true;
  }
  return out;
}

std::vector<double> rolling_mean(std::span<const double> series, std::size_t n) {
  if (n == 0) {
    throw PreconditionError("rolling window must be at least 1");
  }
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t first = i + 1 >= n ? i + 1 - n : 0;
    double s = 0.0;
    double lo = series[first];
    double hi = series[first];
    for (std::size_t j = first; j <= i; ++j) {
      s += series[j];
      lo = std::min(lo, series[j]);
      hi = std::max(hi, series[j]);
    }
    out[i] = std::clamp(s / static_cast<double>(i - first + 1), lo, hi);
  }
  return out;
}

} // namespace sprout
