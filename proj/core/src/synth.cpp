#include "sprout/synth.hpp"

#include "sprout/error.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace sprout {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) from the top 53 bits.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

const char* variety_for(int index) {
  // 1:1:2 mix, the 8 degree cohort's composition.
  switch (index % 4) {
  case 0:
    return "Sorentina";
  case 1:
    return "SHC1010";
  default:
    return "Agria";
  }
}

} // namespace

void SynthConfig::validate() const {
  if (n_subjects < 1) {
    throw ConfigError("n_subjects must be positive");
  }
  if (days_min < 1 || days_max < days_min) {
    throw ConfigError("need 1 <= days_min <= days_max");
  }
  const double rate = effective_rate_hz();
  if (!(rate > 0.0)) {
    throw ConfigError("sample_rate_hz must be positive");
  }
  const double per_day = rate * 86400.0;
  if (std::abs(per_day - std::round(per_day)) > 1e-6) {
    throw ConfigError("sample_rate_hz * 86400 must be a whole number of samples");
  }
  const auto [lo, hi] = signature_band_hz;
  if (!(lo > 0.0) || !(hi > lo) || !(hi < rate / 2.0)) {
    throw ConfigError("signature band must satisfy 0 < low < high < rate/2");
  }
  if (signature_onset_days_before < 1) {
    throw ConfigError("signature_onset_days_before must be positive");
  }
  if (signature_gain < 0.0 || noise_std < 0.0 || drift_amplitude < 0.0 || mains_amplitude < 0.0) {
    throw ConfigError("gains, noise and drift must be non-negative");
  }
  if (bursts_per_day < 0 || !(burst_seconds > 0.0) ||
      bursts_per_day * burst_seconds > 86400.0) {
    throw ConfigError("bursts must fit inside a day");
  }
}

double signature_amplitude(const SynthConfig& config, int sprouting_offset, int day) {
  const int onset = sprouting_offset - config.signature_onset_days_before;
  if (day < onset) {
    return 0.0;
  }
  return config.signature_gain * static_cast<double>(day - onset) /
         static_cast<double>(config.signature_onset_days_before);
}

Recording generate_recording(const SynthConfig& config, int index) {
  config.validate();
  std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(index))));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  const auto span = static_cast<std::uint64_t>(config.days_max - config.days_min + 1);
  const int sprouting = config.days_min + static_cast<int>(rng() % span);

  const double rate = config.effective_rate_hz();
  const auto per_day = static_cast<std::size_t>(std::llround(rate * 86400.0));
  const double drift_period_s = (2.0 + 4.0 * unit(rng)) * 86400.0;
  const double drift_phase = two_pi * unit(rng);
  const double mains_phase = two_pi * unit(rng);

  Recording r;
  char id[32];
  std::snprintf(id, sizeof id, "s%03d", index + 1);
  r.subject_id = id;
  r.variety = variety_for(index);
  r.storage_temp_c = config.storage_temp_c;
  r.sample_rate_hz = rate;
  r.start_day = config.start_day;
  r.sprouting_day = add_days(config.start_day, sprouting);
  r.samples.resize(per_day * static_cast<std::size_t>(sprouting));

  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = config.drift_amplitude * std::sin(two_pi * t / drift_period_s + drift_phase);
    v += config.noise_std * gauss(rng);
    if (config.raw_256hz) {
      v += config.mains_amplitude * (std::sin(two_pi * 50.0 * t + mains_phase) +
                                     0.5 * std::sin(two_pi * 100.0 * t + mains_phase));
    }
    r.samples[i] = v;
  }

  // Burst parameters are drawn every day, so the noise stream does not depend
  // on the gain.
  const double slot = 86400.0 / std::max(1, config.bursts_per_day);
  const auto [band_lo, band_hi] = config.signature_band_hz;
  for (int day = 0; day < sprouting; ++day) {
    const double amp = signature_amplitude(config, sprouting, day);
    for (int b = 0; b < config.bursts_per_day; ++b) {
      const double start = day * 86400.0 + b * slot + (slot - config.burst_seconds) * unit(rng);
      const double freq = band_lo + (band_hi - band_lo) * unit(rng);
      const double phase = two_pi * unit(rng);
      if (amp == 0.0) {
        continue;
      }
      const auto first = static_cast<std::size_t>(std::ceil(start * rate));
      const auto last = static_cast<std::size_t>(std::floor((start + config.burst_seconds) * rate));
      for (std::size_t i = first; i <= last && i < r.samples.size(); ++i) {
        const double tau = static_cast<double>(i) / rate - start;
        const double envelope = 0.5 - 0.5 * std::cos(two_pi * tau / config.burst_seconds);
        r.samples[i] += amp * envelope * std::sin(two_pi * freq * tau + phase);
      }
    }
  }
  return r;
}

Dataset generate(const SynthConfig& config) {
  config.validate();
  Dataset d;
  d.label = config.label;
  d.recordings.reserve(static_cast<std::size_t>(config.n_subjects));
  for (int i = 0; i < config.n_subjects; ++i) {
    d.recordings.push_back(generate_recording(config, i));
  }
  return d;
}

} // namespace sprout
