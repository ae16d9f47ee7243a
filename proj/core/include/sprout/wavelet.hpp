#pragma once

#include "sprout/preprocess.hpp"

#include <complex>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sprout {

// K analysis frequencies, geometrically spaced and descending, with their
// complex-Morlet scales expressed in samples.
struct ScalePlan {
  double sample_rate_hz = 1.0;
  std::size_t window_len = 0;
  double omega0 = 6.0;
  std::string mother = "morlet";
  std::vector<double> frequencies_hz;
  std::vector<double> scales;

  std::size_t k() const { return frequencies_hz.size(); }
};

// Default band: f_max = rate / 4 down to f_min = 4 cycles per window.
// `band_hz` overrides the endpoints as (f_min, f_max).
ScalePlan plan_scales(double sample_rate_hz, std::size_t window_len, std::size_t k,
                      double omega0 = 6.0,
                      std::optional<std::pair<double, double>> band_hz = std::nullopt);

double morlet_scale_for(double frequency_hz, double sample_rate_hz, double omega0);

// |CWT| per scale per sample, scale-major.
struct TransformedWindow {
  std::string subject_id;
  int window_index = 1;
  int day_offset = 0;
  std::vector<std::vector<double>> coefficients;
};

// Circularly periodized, unit-L2 complex Morlet sampled on n points
// (index 0 is the wavelet centre, negative times wrap to the end).
std::vector<std::complex<double>> morlet_kernel(double scale, std::size_t n, double omega0);

// FFT-backed transform for one plan. Owns its FFT plans and precomputed
// kernel spectra, so an engine is not shareable across threads; build one
// per worker.
class CwtEngine {
public:
  explicit CwtEngine(ScalePlan plan);
  ~CwtEngine();
  CwtEngine(CwtEngine&&) noexcept;
  CwtEngine& operator=(CwtEngine&&) noexcept;
  CwtEngine(const CwtEngine&) = delete;
  CwtEngine& operator=(const CwtEngine&) = delete;

  const ScalePlan& plan() const { return plan_; }

  TransformedWindow transform(const SignalWindow& window);
  // Fills `out` (resized to K x W) from raw samples.
  void transform(std::span<const double> samples, std::vector<std::vector<double>>& out);

private:
  struct Impl;
  ScalePlan plan_;
  std::unique_ptr<Impl> impl_;
};

TransformedWindow cwt(const SignalWindow& window, const ScalePlan& plan);

inline constexpr std::size_t kDirectCwtMaxLength = 4096;

// Explicit O(W^2 K) summation of the same transform; a test oracle.
TransformedWindow cwt_direct(const SignalWindow& window, const ScalePlan& plan);

} // namespace sprout
