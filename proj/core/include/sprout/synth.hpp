#pragma once

#include "sprout/dates.hpp"
#include "sprout/ingest.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace sprout {

// Synthetic cohort: slow drift + white noise + band-limited bursts whose
// per-day amplitude ramps from 0 at D - onset to signature_gain at D.
struct SynthConfig {
  int n_subjects = 64;
  int days_min = 40;
  int days_max = 80;
  double sample_rate_hz = 1.0;
  std::pair<double, double> signature_band_hz{0.05, 0.1};
  int signature_onset_days_before = 20;
  double signature_gain = 5.0;
  double noise_std = 1.0;
  double drift_amplitude = 2.0;
  std::uint64_t seed = 7;

  // Emulates the acquisition rate: 256 Hz with 50/100 Hz mains hum.
  bool raw_256hz = false;
  double mains_amplitude = 1.0;

  int bursts_per_day = 24;
  double burst_seconds = 600.0;

  std::string label = "synthetic";
  int storage_temp_c = 8;
  Date start_day{std::chrono::year{2024}, std::chrono::month{10}, std::chrono::day{1}};

  double effective_rate_hz() const { return raw_256hz ? 256.0 : sample_rate_hz; }
  // Throws ConfigError.
  void validate() const;
};

// Burst amplitude on day `day` of a subject that sprouts on day `sprouting_offset`.
double signature_amplitude(const SynthConfig& config, int sprouting_offset, int day);

// Subject `index` depends only on (seed, index).
Recording generate_recording(const SynthConfig& config, int index);
Dataset generate(const SynthConfig& config);

} // namespace sprout
