#include "sprout/preprocess.hpp"

#include "sprout/error.hpp"
#include "sprout/ingest.hpp"

#include <cmath>
#include <numbers>

namespace sprout {

namespace {

void require_below_nyquist(double freq_hz, double sample_rate_hz, const char* what) {
  if (!(freq_hz > 0.0)) {
    throw PreconditionError(std::string(what) + " frequency must be positive");
  }
  if (freq_hz >= sample_rate_hz / 2.0) {
    throw PreconditionError(std::string(what) + " frequency " + std::to_string(freq_hz) +
                            " Hz is at or above Nyquist (" +
                            std::to_string(sample_rate_hz / 2.0) + " Hz)");
  }
}

void require_positive_q(double q) {
  if (!(q > 0.0)) {
    throw PreconditionError("filter q must be positive");
  }
}

ConditionedSignal with_samples(const ConditionedSignal& like, std::vector<double> samples) {
  ConditionedSignal out;
  out.subject_id = like.subject_id;
  out.sample_rate_hz = like.sample_rate_hz;
  out.start_day = like.start_day;
  out.samples = std::move(samples);
  return out;
}

} // namespace

ConditionedSignal to_signal(const Recording& recording) {
  ConditionedSignal s;
  s.subject_id = recording.subject_id;
  s.sample_rate_hz = recording.sample_rate_hz;
  s.samples = recording.samples;
  s.start_day = recording.start_day;
  return s;
}

Biquad Biquad::notch(double sample_rate_hz, double center_hz, double q) {
  require_below_nyquist(center_hz, sample_rate_hz, "notch");
  require_positive_q(q);
  const double w0 = 2.0 * std::numbers::pi * center_hz / sample_rate_hz;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  return Biquad{1.0 / a0, -2.0 * cw / a0, 1.0 / a0, -2.0 * cw / a0, (1.0 - alpha) / a0};
}

Biquad Biquad::lowpass(double sample_rate_hz, double cutoff_hz, double q) {
  require_below_nyquist(cutoff_hz, sample_rate_hz, "low-pass cutoff");
  require_positive_q(q);
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / sample_rate_hz;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b = (1.0 - cw) / 2.0;
  return Biquad{b / a0, (1.0 - cw) / a0, b / a0, -2.0 * cw / a0, (1.0 - alpha) / a0};
}

std::vector<double> Biquad::apply(std::span<const double> x) const {
  std::vector<double> y(x.size());
  double z1 = 0.0;
  double z2 = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double in = x[n];
    const double out = b0 * in + z1;
    z1 = b1 * in - a1 * out + z2;
    z2 = b2 * in - a2 * out;
    y[n] = out;
  }
  return y;
}

ConditionedSignal notch_filter(const ConditionedSignal& signal, double center_hz, double q) {
  const auto filter = Biquad::notch(signal.sample_rate_hz, center_hz, q);
  return with_samples(signal, filter.apply(signal.samples));
}

ConditionedSignal biquad_lowpass(const ConditionedSignal& signal, double cutoff_hz, double q) {
  const auto filter = Biquad::lowpass(signal.sample_rate_hz, cutoff_hz, q);
  return with_samples(signal, filter.apply(signal.samples));
}

ConditionedSignal downsample(const ConditionedSignal& signal, double target_hz) {
  if (!(target_hz > 0.0)) {
    throw PreconditionError("target rate must be positive");
  }
  const double ratio = signal.sample_rate_hz / target_hz;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw PreconditionError("downsampling ratio " + std::to_string(ratio) +
                            " is not a positive integer");
  }
  const auto step = static_cast<std::size_t>(rounded);
  std::vector<double> out;
  out.reserve(signal.samples.size() / step);
  for (std::size_t i = 0; i + step <= signal.samples.size(); i += step) {
    out.push_back(signal.samples[i]);
  }
  auto result = with_samples(signal, std::move(out));
  result.sample_rate_hz = target_hz;
  return result;
}

std::vector<SignalWindow> segment(const ConditionedSignal& signal, int window_seconds) {
  if (window_seconds <= 0) {
    throw PreconditionError("window_seconds must be positive");
  }
  const double exact = signal.sample_rate_hz * window_seconds;
  const double len = std::round(exact);
  if (len < 2.0) {
    throw PreconditionError("a window must span at least 2 samples");
  }
  if (std::abs(exact - len) > 1e-9 * exact) {
    throw PreconditionError("sample_rate_hz * window_seconds must be an integer sample count");
  }
  const auto w = static_cast<std::size_t>(len);
  const std::size_t count = signal.samples.size() / w;
  std::vector<SignalWindow> windows;
  windows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SignalWindow win;
    win.subject_id = signal.subject_id;
    win.window_index = static_cast<int>(i + 1);
    win.day_offset = static_cast<int>((static_cast<long long>(i) * window_seconds) / 86400);
    const auto first = signal.samples.begin() + static_cast<std::ptrdiff_t>(i * w);
    win.samples.assign(first, first + static_cast<std::ptrdiff_t>(w));
    windows.push_back(std::move(win));
  }
  return windows;
}

ConditionedSignal condition(ConditionedSignal signal, const ChainConfig& chain) {
  if (std::abs(signal.sample_rate_hz - chain.target_hz) <= 1e-12 * chain.target_hz) {
    return signal;
  }
  for (double f : chain.notch_hz) {
    signal = notch_filter(signal, f, chain.notch_q);
  }
  signal = biquad_lowpass(signal, chain.lowpass_hz, chain.lowpass_q);
  return downsample(signal, chain.target_hz);
}

} // namespace sprout
