#pragma once

#include "sprout/dates.hpp"

#include <span>
#include <string>
#include <vector>

namespace sprout {

struct Recording;

struct ConditionedSignal {
  std::string subject_id;
  double sample_rate_hz = 1.0;
  std::vector<double> samples;
  Date start_day{};
};

ConditionedSignal to_signal(const Recording& recording);

// One non-overlapping segment of a conditioned signal. window_index is
// 1-based; day_offset counts whole days since start_day.
struct SignalWindow {
  std::string subject_id;
  int window_index = 1;
  int day_offset = 0;
  std::vector<double> samples;
};

// Normalized second-order section (a0 == 1), RBJ cookbook coefficients.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  static Biquad notch(double sample_rate_hz, double center_hz, double q);
  static Biquad lowpass(double sample_rate_hz, double cutoff_hz, double q);

  // Causal, zero initial state, transposed direct form II.
  std::vector<double> apply(std::span<const double> x) const;
};

ConditionedSignal notch_filter(const ConditionedSignal& signal, double center_hz, double q);
ConditionedSignal biquad_lowpass(const ConditionedSignal& signal, double cutoff_hz, double q);
ConditionedSignal downsample(const ConditionedSignal& signal, double target_hz);

// Splits into floor(len / W) windows of W = rate * window_seconds samples;
// a trailing partial window is dropped.
std::vector<SignalWindow> segment(const ConditionedSignal& signal, int window_seconds);

struct ChainConfig {
  std::vector<double> notch_hz{50.0, 100.0};
  double notch_q = 30.0;
  double lowpass_hz = 0.4;
  double lowpass_q = 0.707;
  double target_hz = 1.0;
};

// Notches, low-pass, then decimation. Identity when the input is already at
// target_hz.
ConditionedSignal condition(ConditionedSignal signal, const ChainConfig& chain);

} // namespace sprout
