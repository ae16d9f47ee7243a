#include "sprout/wavelet.hpp"

#include "sprout/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

namespace sprout {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void require_window(const ScalePlan& plan, std::size_t len) {
  if (len != plan.window_len) {
    throw PreconditionError("window length " + std::to_string(len) +
                            " does not match the scale plan (" +
                            std::to_string(plan.window_len) + ")");
  }
}

std::vector<double> demeaned(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) {
    v -= mean;
  }
  return out;
}

} // namespace

double morlet_scale_for(double frequency_hz, double sample_rate_hz, double omega0) {
  return omega0 * sample_rate_hz / (2.0 * std::numbers::pi * frequency_hz);
}

ScalePlan plan_scales(double sample_rate_hz, std::size_t window_len, std::size_t k,
                      double omega0, std::optional<std::pair<double, double>> band_hz) {
  if (k < 2) {
    throw PreconditionError("at least 2 scales are required");
  }
  if (window_len < 4) {
    throw PreconditionError("window length must be at least 4 samples");
  }
  if (!(sample_rate_hz > 0.0) || !(omega0 > 0.0)) {
    throw PreconditionError("sample rate and omega0 must be positive");
  }
  double f_max = sample_rate_hz / 4.0;
  double f_min = 4.0 * sample_rate_hz / static_cast<double>(window_len);
  if (band_hz) {
    f_min = band_hz->first;
    f_max = band_hz->second;
    if (!(f_min > 0.0) || f_max > sample_rate_hz / 2.0) {
      throw PreconditionError("frequency band must lie within (0, rate/2]");
    }
  }
  if (f_min >= f_max) {
    throw PreconditionError("window too short for the requested band: f_min " +
                            std::to_string(f_min) + " Hz >= f_max " + std::to_string(f_max) +
                            " Hz");
  }

  ScalePlan plan;
  plan.sample_rate_hz = sample_rate_hz;
  plan.window_len = window_len;
  plan.omega0 = omega0;
  plan.frequencies_hz.resize(k);
  plan.scales.resize(k);
  const double log_ratio = std::log(f_min / f_max) / static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) {
    double f = f_max * std::exp(log_ratio * static_cast<double>(i));
    if (i == 0) {
      f = f_max;
    } else if (i == k - 1) {
      f = f_min;
    }
    plan.frequencies_hz[i] = f;
    plan.scales[i] = morlet_scale_for(f, sample_rate_hz, omega0);
  }
  return plan;
}

std::vector<std::complex<double>> morlet_kernel(double scale, std::size_t n, double omega0) {
  // Gaussian envelope is below 1e-31 beyond 12 scales.
  const double cutoff = 12.0 * scale;
  const auto len = static_cast<double>(n);
  std::vector<std::complex<double>> h(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double base = 2 * i < n ? static_cast<double>(i) : static_cast<double>(i) - len;
    const double k_lo = std::ceil((-cutoff - base) / len);
    const double k_hi = std::floor((cutoff - base) / len);
    std::complex<double> acc{0.0, 0.0};
    for (double k = k_lo; k <= k_hi; k += 1.0) {
      const double t = (base + k * len) / scale;
      acc += std::polar(std::exp(-0.5 * t * t), omega0 * t);
    }
    h[i] = acc;
    energy += std::norm(acc);
  }
  const double inv = 1.0 / std::sqrt(energy);
  for (auto& v : h) {
    v *= inv;
  }
  return h;
}

struct CwtEngine::Impl {
  std::size_t n = 0;
  fftw_complex* time = nullptr;
  fftw_complex* freq = nullptr;
  fftw_complex* work = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  // conj(H_s[k]) / n per scale.
  std::vector<std::vector<std::complex<double>>> filters;

  explicit Impl(std::size_t len) : n(len) {
    time = fftw_alloc_complex(n);
    freq = fftw_alloc_complex(n);
    work = fftw_alloc_complex(n);
    std::lock_guard lock(planner_mutex());
    forward = fftw_plan_dft_1d(static_cast<int>(n), time, freq, FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft_1d(static_cast<int>(n), work, time, FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  ~Impl() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(forward);
      fftw_destroy_plan(backward);
    }
    fftw_free(time);
    fftw_free(freq);
    fftw_free(work);
  }

  Impl(const Impl&) = delete;
  Impl& operator=(const Impl&) = delete;
};

CwtEngine::CwtEngine(ScalePlan plan) : plan_(std::move(plan)) {
  const std::size_t n = plan_.window_len;
  if (n < 4 || plan_.scales.empty()) {
    throw PreconditionError("invalid scale plan");
  }
  impl_ = std::make_unique<Impl>(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  impl_->filters.reserve(plan_.scales.size());
  for (double s : plan_.scales) {
    const auto h = morlet_kernel(s, n, plan_.omega0);
    for (std::size_t i = 0; i < n; ++i) {
      impl_->time[i][0] = h[i].real();
      impl_->time[i][1] = h[i].imag();
    }
    fftw_execute(impl_->forward);
    std::vector<std::complex<double>> filter(n);
    for (std::size_t i = 0; i < n; ++i) {
      filter[i] = std::complex<double>(impl_->freq[i][0], -impl_->freq[i][1]) * inv_n;
    }
    impl_->filters.push_back(std::move(filter));
  }
}

CwtEngine::~CwtEngine() = default;
CwtEngine::CwtEngine(CwtEngine&&) noexcept = default;
CwtEngine& CwtEngine::operator=(CwtEngine&&) noexcept = default;

void CwtEngine::transform(std::span<const double> samples,
                          std::vector<std::vector<double>>& out) {
  require_window(plan_, samples.size());
  const std::size_t n = impl_->n;
  const auto x = demeaned(samples);
  for (std::size_t i = 0; i < n; ++i) {
    impl_->time[i][0] = x[i];
    impl_->time[i][1] = 0.0;
  }
  fftw_execute(impl_->forward);

  out.resize(impl_->filters.size());
  for (std::size_t s = 0; s < impl_->filters.size(); ++s) {
    const auto& filter = impl_->filters[s];
    for (std::size_t i = 0; i < n; ++i) {
      const std::complex<double> prod =
          std::complex<double>(impl_->freq[i][0], impl_->freq[i][1]) * filter[i];
      impl_->work[i][0] = prod.real();
      impl_->work[i][1] = prod.imag();
    }
    fftw_execute(impl_->backward);
    auto& row = out[s];
    row.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double re = impl_->time[i][0];
      const double im = impl_->time[i][1];
      row[i] = std::sqrt(re * re + im * im);
    }
  }
}

TransformedWindow CwtEngine::transform(const SignalWindow& window) {
  TransformedWindow tw;
  tw.subject_id = window.subject_id;
  tw.window_index = window.window_index;
  tw.day_offset = window.day_offset;
  transform(window.samples, tw.coefficients);
  return tw;
}

TransformedWindow cwt(const SignalWindow& window, const ScalePlan& plan) {
  require_window(plan, window.samples.size());
  CwtEngine engine(plan);
  return engine.transform(window);
}

TransformedWindow cwt_direct(const SignalWindow& window, const ScalePlan& plan) {
  const std::size_t n = window.samples.size();
  if (n > kDirectCwtMaxLength) {
    throw PreconditionError("direct CWT is limited to windows of " +
                            std::to_string(kDirectCwtMaxLength) + " samples");
  }
  require_window(plan, n);
  const auto x = demeaned(window.samples);

  TransformedWindow tw;
  tw.subject_id = window.subject_id;
  tw.window_index = window.window_index;
  tw.day_offset = window.day_offset;
  tw.coefficients.reserve(plan.scales.size());
  for (double s : plan.scales) {
    const auto h = morlet_kernel(s, n, plan.omega0);
    std::vector<double> row(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::complex<double> acc{0.0, 0.0};
      for (std::size_t m = 0; m < n; ++m) {
        acc += x[m] * std::conj(h[(m + n - t) % n]);
      }
      row[t] = std::abs(acc);
    }
    tw.coefficients.push_back(std::move(row));
  }
  return tw;
}

} // namespace sprout
