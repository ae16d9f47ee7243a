#include "sprout/features.hpp"

#include "sprout/config.hpp"
#include "sprout/error.hpp"
#include "sprout/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <mutex>
#include <optional>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace sprout {

const std::array<const char*, ScaleFeatures::kCount>& ScaleFeatures::names() {
  static const std::array<const char*, kCount> n{
      "energy", "p5",  "p25", "median",  "mean",           "p75",           "p95",
      "std",    "min", "max", "entropy", "zero_crossings", "mean_crossings"};
  return n;
}

std::array<double, ScaleFeatures::kCount> ScaleFeatures::to_array() const {
  return {energy, p5,  p25, median,  mean,
          p75,    p95, std, min,     max,
          entropy, static_cast<double>(zero_crossings), static_cast<double>(mean_crossings)};
}

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) {
    throw PreconditionError("percentile of an empty sequence");
  }
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  const double v = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  return std::clamp(v, sorted[lo], sorted[hi]);
}

namespace {

// Order-preserving map from IEEE-754 doubles to unsigned keys.
std::uint64_t sort_key(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  return (bits >> 63) != 0 ? ~bits : bits | (std::uint64_t{1} << 63);
}

// LSD radix sort, 16-bit digits; skips digits shared by every key.
void radix_sort(std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::uint64_t> keys(n);
  std::vector<std::uint64_t> scratch(n);
  std::uint64_t all_and = ~std::uint64_t{0};
  std::uint64_t all_or = 0;
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = sort_key(values[i]);
    all_and &= keys[i];
    all_or |= keys[i];
  }
  std::vector<std::uint32_t> offsets(0x10001);
  for (int shift = 0; shift < 64; shift += 16) {
    if (((all_and ^ all_or) >> shift & 0xFFFF) == 0) {
      continue;
    }
    std::fill(offsets.begin(), offsets.end(), 0U);
    for (auto k : keys) {
      ++offsets[(k >> shift & 0xFFFF) + 1];
    }
    for (std::size_t b = 1; b < offsets.size(); ++b) {
      offsets[b] += offsets[b - 1];
    }
    for (auto k : keys) {
      scratch[offsets[k >> shift & 0xFFFF]++] = k;
    }
    keys.swap(scratch);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t k = keys[i];
    const std::uint64_t bits = (k >> 63) != 0 ? k & ~(std::uint64_t{1} << 63) : ~k;
    values[i] = std::bit_cast<double>(bits);
  }
}

bool strict_sign_change(double a, double b) {
  return (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0);
}

} // namespace

ScaleFeatures extract_scale_features(std::span<const double> values, int entropy_bins) {
  const std::size_t n = values.size();
  if (n < 2) {
    throw PreconditionError("feature extraction needs at least 2 samples");
  }
  if (entropy_bins < 1) {
    throw PreconditionError("entropy_bins must be at least 1");
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw PreconditionError("feature extraction needs finite samples");
    }
  }
  std::vector<double> sorted(values.begin(), values.end());
  radix_sort(sorted);

  // Moments are summed over the sorted copy so they do not depend on sample order.
  ScaleFeatures f;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double v : sorted) {
    sum += v;
    sum_sq += v * v;
  }
  const auto count = static_cast<double>(n);
  f.energy = sum_sq;
  f.mean = sum / count;
  double dev_sq = 0.0;
  for (double v : sorted) {
    dev_sq += (v - f.mean) * (v - f.mean);
  }
  f.std = std::sqrt(dev_sq / count);
  f.min = sorted.front();
  f.max = sorted.back();
  f.p5 = percentile_sorted(sorted, 5.0);
  f.p25 = percentile_sorted(sorted, 25.0);
  f.median = percentile_sorted(sorted, 50.0);
  f.p75 = percentile_sorted(sorted, 75.0);
  f.p95 = percentile_sorted(sorted, 95.0);

  const double range = f.max - f.min;
  if (range > 0.0) {
    std::vector<std::size_t> hist(static_cast<std::size_t>(entropy_bins), 0);
    const double bins = static_cast<double>(entropy_bins);
    for (double v : sorted) {
      auto b = static_cast<std::size_t>((v - f.min) / range * bins);
      hist[std::min(b, hist.size() - 1)]++;
    }
    double h = 0.0;
    for (std::size_t c : hist) {
      if (c > 0) {
        const double p = static_cast<double>(c) / count;
        h -= p * std::log(p);
      }
    }
    f.entropy = std::max(0.0, h);
  }

  // Samples within the rounding error of the computed mean count as touching
  // it; the bound scales with the data, so crossings are scale-invariant.
  const double touch = count * std::numeric_limits<double>::epsilon() *
                       std::max(std::abs(f.min), std::abs(f.max));
  auto deviation = [&](double v) {
    const double d = v - f.mean;
    return std::abs(d) <= touch ? 0.0 : d;
  };
  for (std::size_t i = 1; i < n; ++i) {
    if (strict_sign_change(values[i - 1], values[i])) {
      ++f.zero_crossings;
    }
    if (strict_sign_change(deviation(values[i - 1]), deviation(values[i]))) {
      ++f.mean_crossings;
    }
  }
  return f;
}

std::string FeatureLayout::version() const {
  std::ostringstream out;
  out << "sprout-features/1;blocks=" << blocks << ";per_block=" << kFeaturesPerScale
      << ";mode=" << (time_domain ? "time" : "cwt");
  return out.str();
}

FeatureLayout parse_feature_layout(const std::string& version) {
  FeatureLayout layout;
  std::size_t per_block = 0;
  std::string mode;
  std::istringstream in(version);
  std::string part;
  bool header = false;
  while (std::getline(in, part, ';')) {
    if (part == "sprout-features/1") {
      header = true;
    } else if (part.rfind("blocks=", 0) == 0) {
      layout.blocks = std::stoul(part.substr(7));
    } else if (part.rfind("per_block=", 0) == 0) {
      per_block = std::stoul(part.substr(10));
    } else if (part.rfind("mode=", 0) == 0) {
      mode = part.substr(5);
    }
  }
  if (!header || per_block != kFeaturesPerScale || (mode != "cwt" && mode != "time") ||
      layout.blocks == 0) {
    throw DataError("unsupported feature layout '" + version + "'");
  }
  layout.time_domain = mode == "time";
  return layout;
}

FeatureVector build_feature_vector(const TransformedWindow& tw, const ScalePlan& plan,
                                   int entropy_bins) {
  if (tw.coefficients.size() != plan.k()) {
    throw PreconditionError("transformed window has " + std::to_string(tw.coefficients.size()) +
                            " scales, plan has " + std::to_string(plan.k()));
  }
  FeatureVector fv;
  fv.subject_id = tw.subject_id;
  fv.window_index = tw.window_index;
  fv.day_offset = tw.day_offset;
  fv.values.reserve(plan.k() * kFeaturesPerScale);
  for (const auto& series : tw.coefficients) {
    const auto block = extract_scale_features(series, entropy_bins).to_array();
    fv.values.insert(fv.values.end(), block.begin(), block.end());
  }
  return fv;
}

FeatureVector build_time_domain_vector(const SignalWindow& window, int entropy_bins) {
  FeatureVector fv;
  fv.subject_id = window.subject_id;
  fv.window_index = window.window_index;
  fv.day_offset = window.day_offset;
  const auto block = extract_scale_features(window.samples, entropy_bins).to_array();
  fv.values.assign(block.begin(), block.end());
  return fv;
}

struct FeatureExtractor::Impl {
  PipelineConfig config;
  std::optional<CwtEngine> engine;
};

FeatureExtractor::FeatureExtractor(const PipelineConfig& config)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = config;
  if (!config.time_domain) {
    impl_->engine.emplace(scale_plan(config));
  }
}

FeatureExtractor::~FeatureExtractor() = default;
FeatureExtractor::FeatureExtractor(FeatureExtractor&&) noexcept = default;
FeatureExtractor& FeatureExtractor::operator=(FeatureExtractor&&) noexcept = default;

FeatureLayout FeatureExtractor::layout() const { return feature_layout(impl_->config); }

std::vector<FeatureVector> FeatureExtractor::extract(const Recording& recording) {
  return extract(recording, {});
}

std::vector<FeatureVector> FeatureExtractor::extract(
    const Recording& recording, const std::function<void(const TransformedWindow&)>& visit) {
  const auto& cfg = impl_->config;
  const auto signal = condition(to_signal(recording), cfg.chain);
  const auto windows = segment(signal, cfg.window_seconds);
  std::vector<FeatureVector> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (cfg.time_domain) {
      out.push_back(build_time_domain_vector(w, cfg.entropy_bins));
      continue;
    }
    const auto tw = impl_->engine->transform(w);
    if (visit) {
      visit(tw);
    }
    out.push_back(build_feature_vector(tw, impl_->engine->plan(), cfg.entropy_bins));
  }
  return out;
}

std::vector<LabeledExample> label_windows(std::vector<FeatureVector> vectors,
                                          int sprouting_offset) {
  std::vector<LabeledExample> out;
  out.reserve(vectors.size());
  for (auto& v : vectors) {
    if (v.day_offset > sprouting_offset) {
      continue;
    }
    const double target = static_cast<double>(sprouting_offset - v.day_offset);
    out.push_back(LabeledExample{std::move(v), target});
  }
  return out;
}

namespace {

// Subjects are labelled in ascending id order; `load(i)` yields subject i's
// recording and is called from worker threads.
ExampleTable build_examples(const std::vector<std::string>& ids,
                            const std::vector<int>& sprouting_offsets,
                            const std::function<Recording(std::size_t)>& load,
                            const PipelineConfig& config) {
  std::vector<std::vector<LabeledExample>> per_subject(ids.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      FeatureExtractor extractor(config);
      for (std::size_t i = next++; i < ids.size(); i = next++) {
        per_subject[i] = label_windows(extractor.extract(load(i)), sprouting_offsets[i]);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) {
        failure = std::current_exception();
      }
      next = ids.size();
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::max(1, config.jobs));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_workers, ids.size()); ++t) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }

  ExampleTable table;
  table.layout = feature_layout(config);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    table.windows_per_subject[ids[i]] = static_cast<int>(per_subject[i].size());
    table.sprouting_offsets[ids[i]] = sprouting_offsets[i];
    for (auto& ex : per_subject[i]) {
      table.examples.push_back(std::move(ex));
    }
  }
  return table;
}

} // namespace

ExampleTable build_dataset(const Dataset& dataset, const PipelineConfig& config) {
  require_ground_truth(dataset);
  config.validate();

  std::vector<const Recording*> order;
  for (const auto& r : dataset.recordings) {
    order.push_back(&r);
  }
  std::sort(order.begin(), order.end(),
            [](const Recording* a, const Recording* b) { return a->subject_id < b->subject_id; });
  std::vector<std::string> ids;
  std::vector<int> offsets;
  for (const auto* r : order) {
    ids.push_back(r->subject_id);
    offsets.push_back(*r->sprouting_offset());
  }
  return build_examples(
      ids, offsets, [&](std::size_t i) { return *order[i]; }, config);
}

ExampleTable build_dataset(const Manifest& manifest, const PipelineConfig& config) {
  require_ground_truth(manifest);
  config.validate();

  std::vector<const ManifestEntry*> order;
  for (const auto& e : manifest.subjects) {
    order.push_back(&e);
  }
  std::sort(order.begin(), order.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
    return a->subject_id < b->subject_id;
  });
  std::vector<std::string> ids;
  std::vector<int> offsets;
  for (const auto* e : order) {
    ids.push_back(e->subject_id);
    offsets.push_back(*e->sprouting_offset());
  }
  return build_examples(
      ids, offsets, [&](std::size_t i) { return load_recording(*order[i]); }, config);
}

} // namespace sprout
