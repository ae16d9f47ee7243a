#include "cli.hpp"

#include "sprout/config.hpp"
#include "sprout/dates.hpp"
#include "sprout/error.hpp"
#include "sprout/estimate.hpp"
#include "sprout/evaluate.hpp"
#include "sprout/feature_table.hpp"
#include "sprout/features.hpp"
#include "sprout/ingest.hpp"
#include "sprout/preprocess.hpp"
#include "sprout/regress.hpp"
#include "sprout/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#ifndef SPROUT_VERSION
#define SPROUT_VERSION "0.0.0"
#endif

namespace sprout::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Flags shared by every subcommand.
struct Common {
  std::optional<std::string> config_path;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> meta_path;
};

// Pipeline flags; each subcommand registers the groups it uses and unset
// flags leave the config-file (or default) value alone.
struct PipelineFlags {
  std::optional<std::vector<double>> notch;
  std::optional<double> notch_q;
  std::optional<double> lowpass;
  std::optional<double> lowpass_q;
  std::optional<double> target_hz;
  std::optional<int> window_seconds;

  std::optional<std::size_t> scales;
  std::optional<std::string> wavelet;
  std::optional<double> omega0;
  std::optional<std::vector<double>> band;
  std::optional<int> entropy_bins;
  bool time_domain = false;

  std::optional<std::string> strategy;
  std::optional<double> uq_th;
  std::optional<int> n_trees;
  std::optional<int> max_depth;
  std::optional<double> learning_rate;
  std::optional<int> min_samples_leaf;
  std::optional<double> subsample;
  std::optional<int> n_members;

  std::optional<double> bin_width;
  std::optional<int> rolling_n;
  std::optional<std::vector<double>> uq_sweep;
};

template <typename T>
CLI::Option* add_opt(CLI::App* app, const std::string& name, std::optional<T>& target,
             const std::string& help) {
  return app->add_option_function<T>(
      name, [&target](const T& v) { target = v; }, help);
}

void add_common(CLI::App* app, Common& c) {
  add_opt(app, "--config", c.config_path, "INI config file (flags override it)");
  add_opt(app, "--jobs", c.jobs, "worker thread cap")->check(CLI::PositiveNumber);
  add_opt(app, "--run-meta", c.meta_path, "where to write run_meta.json");
}

void add_seed(CLI::App* app, Common& c) {
  add_opt(app, "--seed", c.seed, "RNG seed (falls back to $SPROUT_SEED)");
}

void add_preprocess_flags(CLI::App* app, PipelineFlags& f) {
  app->add_option_function<std::vector<double>>(
         "--notch", [&f](const std::vector<double>& v) { f.notch = v; },
         "notch centre frequency in Hz (repeatable)")
      ->allow_extra_args(false);
  add_opt(app, "--notch-q", f.notch_q, "notch quality factor");
  add_opt(app, "--lowpass", f.lowpass, "anti-alias low-pass cutoff in Hz");
  add_opt(app, "--lowpass-q", f.lowpass_q, "low-pass quality factor");
  add_opt(app, "--target-hz", f.target_hz, "conditioned sample rate");
  add_opt(app, "--window-seconds", f.window_seconds, "analysis window length");
}

void add_feature_flags(CLI::App* app, PipelineFlags& f) {
  add_opt(app, "--scales", f.scales, "number of wavelet scales K");
  add_opt(app, "--wavelet", f.wavelet, "mother wavelet (morlet)");
  add_opt(app, "--omega0", f.omega0, "Morlet centre frequency");
  app->add_option_function<std::vector<double>>(
         "--band", [&f](const std::vector<double>& v) { f.band = v; },
         "scale plan band: LOW_HZ HIGH_HZ")
      ->expected(2);
  add_opt(app, "--entropy-bins", f.entropy_bins, "histogram bins for entropy");
  app->add_flag("--time-domain", f.time_domain, "features on raw windows instead of the CWT");
}

void add_regress_flags(CLI::App* app, PipelineFlags& f) {
  add_opt(app, "--strategy", f.strategy, "single|ensemble")
      ->check(CLI::IsMember({"single", "ensemble"}));
  add_opt(app, "--uq-th", f.uq_th, "max 95% CI width in days (ensemble)");
  add_opt(app, "--n-trees", f.n_trees, "boosting stages");
  add_opt(app, "--max-depth", f.max_depth, "tree depth");
  add_opt(app, "--learning-rate", f.learning_rate, "shrinkage");
  add_opt(app, "--min-samples-leaf", f.min_samples_leaf, "minimum rows per leaf");
  add_opt(app, "--subsample", f.subsample, "row fraction per stage");
  add_opt(app, "--members", f.n_members, "ensemble size");
}

void add_evaluate_flags(CLI::App* app, PipelineFlags& f) {
  add_opt(app, "--bin-width", f.bin_width, "calibration bin width in days");
  add_opt(app, "--rolling-n", f.rolling_n, "trailing rolling mean length in days");
  app->add_option_function<std::vector<double>>(
      "--uq-sweep", [&f](const std::vector<double>& v) { f.uq_sweep = v; },
      "extra UQ thresholds to report (ensemble)");
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(origin + ": seed must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

struct Resolved {
  PipelineConfig config;
  std::string seed_source = "default";
};

// Precedence per value: flag > config file > environment > default.
Resolved resolve(const Common& c, const PipelineFlags& f) {
  Resolved r;
  auto& cfg = r.config;
  if (const char* env = std::getenv("SPROUT_SEED"); env && *env) {
    cfg.seed = parse_seed(env, "SPROUT_SEED");
    r.seed_source = "env";
  }
  if (c.config_path) {
    const auto keys = apply_config_file(*c.config_path, cfg);
    if (keys.count("run.seed")) {
      r.seed_source = "config";
    }
  }
  if (c.seed) {
    cfg.seed = *c.seed;
    r.seed_source = "flag";
  }
  if (c.jobs) {
    cfg.jobs = *c.jobs;
  }

  if (f.notch) {
    cfg.chain.notch_hz = *f.notch;
  }
  if (f.notch_q) {
    cfg.chain.notch_q = *f.notch_q;
  }
  if (f.lowpass) {
    cfg.chain.lowpass_hz = *f.lowpass;
  }
  if (f.lowpass_q) {
    cfg.chain.lowpass_q = *f.lowpass_q;
  }
  if (f.target_hz) {
    cfg.chain.target_hz = *f.target_hz;
  }
  if (f.window_seconds) {
    cfg.window_seconds = *f.window_seconds;
  }
  if (f.scales) {
    cfg.scales = *f.scales;
  }
  if (f.wavelet) {
    cfg.wavelet = *f.wavelet;
  }
  if (f.omega0) {
    cfg.omega0 = *f.omega0;
  }
  if (f.band) {
    cfg.band_hz = std::make_pair((*f.band)[0], (*f.band)[1]);
  }
  if (f.entropy_bins) {
    cfg.entropy_bins = *f.entropy_bins;
  }
  if (f.time_domain) {
    cfg.time_domain = true;
  }
  if (f.strategy) {
    cfg.strategy = parse_strategy(*f.strategy);
  }
  if (f.uq_th) {
    cfg.uq_th = *f.uq_th;
  }
  if (f.n_trees) {
    cfg.regressor.n_trees = *f.n_trees;
  }
  if (f.max_depth) {
    cfg.regressor.max_depth = *f.max_depth;
  }
  if (f.learning_rate) {
    cfg.regressor.learning_rate = *f.learning_rate;
  }
  if (f.min_samples_leaf) {
    cfg.regressor.min_samples_leaf = *f.min_samples_leaf;
  }
  if (f.subsample) {
    cfg.regressor.subsample = *f.subsample;
  }
  if (f.n_members) {
    cfg.n_members = *f.n_members;
  }
  if (f.bin_width) {
    cfg.evaluation.bin_width = *f.bin_width;
  }
  if (f.rolling_n) {
    cfg.evaluation.rolling_n = *f.rolling_n;
  }
  if (f.uq_sweep) {
    cfg.evaluation.uq_sweep = *f.uq_sweep;
  }
  cfg.regressor.seed = cfg.seed;
  cfg.validate();
  return r;
}

void require_uq_th(const PipelineConfig& cfg) {
  if (cfg.strategy == Strategy::ensemble && !cfg.uq_th) {
    throw ConfigError("--uq-th is required with --strategy ensemble");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write '" + path.string() + "'");
  }
  out << text;
  if (!out) {
    throw InputError("failed writing '" + path.string() + "'");
  }
}

fs::path dir_of(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

// Captures what a run needs to be reproduced; no timestamps or host data so
// that identical invocations write identical files.
struct RunMeta {
  std::string command;
  std::vector<std::string> args;
  ordered_json config;
  std::uint64_t seed = 0;
  std::string seed_source;
  ordered_json inputs = ordered_json::object();
  ordered_json outputs = ordered_json::object();
  ordered_json extra = ordered_json::object();

  void set_config(const Resolved& r) {
    config = ordered_json::parse(config_to_json(r.config));
    seed = r.config.seed;
    seed_source = r.seed_source;
  }

  void write(const fs::path& path) const {
    ordered_json j;
    j["tool"] = "sprout";
    j["version"] = SPROUT_VERSION;
    j["command"] = command;
    j["arguments"] = args;
    j["seed"] = seed;
    j["seed_source"] = seed_source;
    j["config"] = config;
    for (const auto& [k, v] : extra.items()) {
      j[k] = v;
    }
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    write_text(path, j.dump(2) + "\n");
  }
};

fs::path meta_path(const Common& c, const fs::path& default_dir) {
  return c.meta_path ? fs::path(*c.meta_path) : default_dir / "run_meta.json";
}

// ---- synth -----------------------------------------------------------------

struct SynthFlags {
  std::string out;
  std::optional<int> subjects;
  std::optional<int> days_min;
  std::optional<int> days_max;
  std::optional<double> rate_hz;
  std::optional<std::vector<double>> band;
  std::optional<int> onset_days;
  std::optional<double> gain;
  std::optional<double> noise;
  std::optional<double> drift;
  std::optional<double> mains;
  std::optional<std::string> label;
  std::optional<int> storage_temp;
  std::optional<std::string> start_day;
  bool raw_256hz = false;
};

void run_synth(const SynthFlags& f, const Common& c, RunMeta& meta, std::ostream& out) {
  PipelineFlags none;
  Resolved r = resolve(c, none);
  SynthConfig sc;
  if (r.seed_source != "default") {
    sc.seed = r.config.seed;
  } else {
    r.config.seed = sc.seed;
  }
  if (f.subjects) {
    sc.n_subjects = *f.subjects;
  }
  if (f.days_min) {
    sc.days_min = *f.days_min;
  }
  if (f.days_max) {
    sc.days_max = *f.days_max;
  }
  if (f.rate_hz) {
    sc.sample_rate_hz = *f.rate_hz;
  }
  if (f.band) {
    sc.signature_band_hz = {(*f.band)[0], (*f.band)[1]};
  }
  if (f.onset_days) {
    sc.signature_onset_days_before = *f.onset_days;
  }
  if (f.gain) {
    sc.signature_gain = *f.gain;
  }
  if (f.noise) {
    sc.noise_std = *f.noise;
  }
  if (f.drift) {
    sc.drift_amplitude = *f.drift;
  }
  if (f.mains) {
    sc.mains_amplitude = *f.mains;
  }
  if (f.label) {
    sc.label = *f.label;
  }
  if (f.storage_temp) {
    sc.storage_temp_c = *f.storage_temp;
  }
  if (f.start_day) {
    try {
      sc.start_day = parse_iso_date(*f.start_day);
    } catch (const DataError& e) {
      throw ConfigError(std::string("--start-day: ") + e.what());
    }
  }
  sc.raw_256hz = f.raw_256hz;
  sc.validate();

  const fs::path dir(f.out);
  fs::create_directories(dir);
  Manifest manifest;
  manifest.label = sc.label;
  // One recording resident at a time: day-long 1 Hz cohorts run to gigabytes.
  for (int i = 0; i < sc.n_subjects; ++i) {
    Recording rec = generate_recording(sc, i);
    ManifestEntry e;
    e.subject_id = rec.subject_id;
    e.variety = rec.variety;
    e.storage_temp_c = rec.storage_temp_c;
    e.sample_rate_hz = rec.sample_rate_hz;
    e.start_day = rec.start_day;
    e.sprouting_day = rec.sprouting_day;
    e.signal_path = dir / (rec.subject_id + ".csv");
    write_signal_csv(e.signal_path, rec.sample_rate_hz, rec.samples);
    manifest.subjects.push_back(std::move(e));
  }
  const fs::path manifest_path = dir / "manifest.json";
  write_manifest(manifest, manifest_path);

  meta.set_config(r);
  meta.extra["synth"] = {{"n_subjects", sc.n_subjects},
                         {"days_min", sc.days_min},
                         {"days_max", sc.days_max},
                         {"sample_rate_hz", sc.effective_rate_hz()},
                         {"signature_band_hz", {sc.signature_band_hz.first, sc.signature_band_hz.second}},
                         {"signature_onset_days_before", sc.signature_onset_days_before},
                         {"signature_gain", sc.signature_gain},
                         {"noise_std", sc.noise_std},
                         {"drift_amplitude", sc.drift_amplitude},
                         {"raw_256hz", sc.raw_256hz},
                         {"mains_amplitude", sc.mains_amplitude},
                         {"bursts_per_day", sc.bursts_per_day},
                         {"burst_seconds", sc.burst_seconds},
                         {"label", sc.label},
                         {"storage_temp_c", sc.storage_temp_c},
                         {"start_day", format_iso_date(sc.start_day)},
                         {"seed", sc.seed}};
  meta.outputs["manifest"] = manifest_path.generic_string();
  meta.write(meta_path(c, dir));
  out << "wrote " << sc.n_subjects << " subjects to " << manifest_path.generic_string() << "\n";
}

// ---- preprocess --------------------------------------------------------------

struct PreprocessFlags {
  std::string manifest;
  std::optional<std::string> out_manifest;
};

fs::path conditioned_path(const fs::path& signal) {
  fs::path p = signal;
  p.replace_extension();
  return p.string() + ".conditioned.csv";
}

void run_preprocess(const PreprocessFlags& f, const Common& c, const PipelineFlags& pf,
                    RunMeta& meta, std::ostream& out) {
  const Resolved r = resolve(c, pf);
  const fs::path manifest_path(f.manifest);
  Manifest manifest = load_manifest(manifest_path);
  const fs::path out_manifest =
      f.out_manifest ? fs::path(*f.out_manifest)
                     : dir_of(manifest_path) /
                           (manifest_path.stem().string() + ".conditioned.json");

  Manifest conditioned;
  conditioned.label = manifest.label;
  std::size_t total_windows = 0;
  for (const auto& entry : manifest.subjects) {
    const Recording rec = load_recording(entry);
    const ConditionedSignal sig = condition(to_signal(rec), r.config.chain);
    total_windows += segment(sig, r.config.window_seconds).size();
    ManifestEntry e = entry;
    e.sample_rate_hz = sig.sample_rate_hz;
    e.signal_path = conditioned_path(entry.signal_path);
    write_signal_csv(e.signal_path, sig.sample_rate_hz, sig.samples);
    conditioned.subjects.push_back(std::move(e));
  }
  write_manifest(conditioned, out_manifest);

  meta.set_config(r);
  meta.inputs["manifest"] = manifest_path.generic_string();
  meta.outputs["manifest"] = out_manifest.generic_string();
  meta.write(meta_path(c, dir_of(out_manifest)));
  out << "conditioned " << conditioned.subjects.size() << " subjects (" << total_windows
      << " windows) into " << out_manifest.generic_string() << "\n";
}

// ---- features ----------------------------------------------------------------

struct FeaturesFlags {
  std::string manifest;
  std::string out;
  std::optional<std::string> dump_scalogram;
};

void write_scalogram(const fs::path& dir, const TransformedWindow& tw) {
  char name[64];
  std::snprintf(name, sizeof name, "_w%04d.csv", tw.window_index);
  std::ofstream os(dir / (tw.subject_id + name), std::ios::binary);
  if (!os) {
    throw InputError("cannot write scalogram under '" + dir.string() + "'");
  }
  std::string line;
  char buf[32];
  for (const auto& row : tw.coefficients) {
    line.clear();
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) {
        line += ',';
      }
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, row[i]);
      line.append(buf, ptr);
    }
    line += '\n';
    os << line;
  }
}

void run_features(const FeaturesFlags& f, const Common& c, const PipelineFlags& pf, RunMeta& meta,
                  std::ostream& out) {
  const Resolved r = resolve(c, pf);
  const fs::path manifest_path(f.manifest);
  const Manifest manifest = load_manifest(manifest_path);
  const bool labelled = std::all_of(manifest.subjects.begin(), manifest.subjects.end(),
                                    [](const ManifestEntry& e) { return e.sprouting_day.has_value(); });

  FeatureTable table;
  if (labelled && !f.dump_scalogram) {
    table = to_feature_table(build_dataset(manifest, r.config));
  } else {
    std::optional<fs::path> dump;
    if (f.dump_scalogram) {
      dump = fs::path(*f.dump_scalogram);
      fs::create_directories(*dump);
    }
    std::vector<const ManifestEntry*> order;
    for (const auto& e : manifest.subjects) {
      order.push_back(&e);
    }
    std::sort(order.begin(), order.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
      return a->subject_id < b->subject_id;
    });
    FeatureExtractor extractor(r.config);
    table.layout = extractor.layout();
    for (const auto* e : order) {
      const Recording rec = load_recording(*e);
      std::vector<FeatureVector> vectors =
          dump && !r.config.time_domain
              ? extractor.extract(rec, [&](const TransformedWindow& tw) { write_scalogram(*dump, tw); })
              : extractor.extract(rec);
      const auto offset = rec.sprouting_offset();
      for (auto& fv : vectors) {
        if (offset && fv.day_offset > *offset) {
          continue;
        }
        std::optional<double> target;
        if (offset) {
          target = static_cast<double>(*offset - fv.day_offset);
        }
        table.rows.push_back(std::move(fv));
        table.targets.push_back(target);
      }
    }
  }
  const fs::path out_path(f.out);
  if (out_path.has_parent_path()) {
    fs::create_directories(out_path.parent_path());
  }
  write_feature_table(out_path, table);

  meta.set_config(r);
  meta.inputs["manifest"] = manifest_path.generic_string();
  meta.outputs["features"] = out_path.generic_string();
  if (f.dump_scalogram) {
    meta.outputs["scalograms"] = fs::path(*f.dump_scalogram).generic_string();
  }
  meta.write(meta_path(c, dir_of(out_path)));
  out << "wrote " << table.rows.size() << " windows x " << table.layout.width() << " features ("
      << table.layout.version() << ") to " << out_path.generic_string() << "\n";
}

// ---- train / evaluate shared input -------------------------------------------

struct DataSource {
  std::optional<std::string> manifest;
  std::optional<std::string> features;
};

struct LoadedTable {
  ExampleTable table;
  std::string label;
  std::vector<int> storage_temps;
};

LoadedTable load_examples(const DataSource& src, const PipelineConfig& cfg, RunMeta& meta) {
  LoadedTable out;
  if (src.features) {
    out.table = to_example_table(read_feature_table(*src.features));
    if (out.table.layout != feature_layout(cfg)) {
      throw ConfigError("feature table has layout '" + out.table.layout.version() +
                        "' but the configuration produces '" + feature_layout(cfg).version() + "'");
    }
    meta.inputs["features"] = fs::path(*src.features).generic_string();
    out.label = fs::path(*src.features).stem().string();
    return out;
  }
  const Manifest manifest = load_manifest(*src.manifest);
  out.table = build_dataset(manifest, cfg);
  out.label = manifest.label;
  for (const auto& e : manifest.subjects) {
    out.storage_temps.push_back(e.storage_temp_c);
  }
  std::sort(out.storage_temps.begin(), out.storage_temps.end());
  out.storage_temps.erase(std::unique(out.storage_temps.begin(), out.storage_temps.end()),
                          out.storage_temps.end());
  meta.inputs["manifest"] = fs::path(*src.manifest).generic_string();
  return out;
}

// ---- train -------------------------------------------------------------------

struct TrainFlags {
  DataSource source;
  std::string model_out;
};

void run_train(const TrainFlags& f, const Common& c, const PipelineFlags& pf, RunMeta& meta,
               std::ostream& out) {
  const Resolved r = resolve(c, pf);
  require_uq_th(r.config);
  const LoadedTable data = load_examples(f.source, r.config, meta);
  const auto& examples = data.table.examples;
  if (examples.empty()) {
    throw DataError("no labelled windows to train on");
  }
  const TrainingConfig tc = training_config(r.config);
  ModelFile model;
  if (tc.strategy == Strategy::single) {
    model = fit(examples, tc.spec, data.table.layout);
  } else {
    model = fit_ensemble(examples, tc.spec, data.table.layout, tc.n_members, tc.seed, tc.jobs);
  }
  const fs::path model_path(f.model_out);
  if (model_path.has_parent_path()) {
    fs::create_directories(model_path.parent_path());
  }
  save_model(model_path, model);

  meta.set_config(r);
  meta.outputs["model"] = model_path.generic_string();
  meta.write(meta_path(c, dir_of(model_path)));
  out << "trained " << to_string(tc.strategy) << " model on " << examples.size()
      << " windows from " << data.table.windows_per_subject.size() << " subjects -> "
      << model_path.generic_string() << "\n";
}

// ---- predict -----------------------------------------------------------------

struct PredictFlags {
  std::string model;
  std::string manifest;
  std::optional<int> observe_day;
  std::optional<std::string> out;
};

std::string format_prediction_json(const ordered_json& j) {
  return j.dump(2) + "\n";
}

void run_predict(const PredictFlags& f, const Common& c, const PipelineFlags& pf, RunMeta& meta,
                 std::ostream& out) {
  const Resolved r = resolve(c, pf);
  const ModelFile model = load_model(f.model);
  const bool is_ensemble = std::holds_alternative<Ensemble>(model);
  if (is_ensemble && !r.config.uq_th) {
    throw ConfigError("--uq-th is required for an ensemble model");
  }
  const FeatureLayout model_layout = is_ensemble ? std::get<Ensemble>(model).layout()
                                                 : std::get<TrainedModel>(model).layout;
  if (model_layout != feature_layout(r.config)) {
    throw ConfigError("model expects layout '" + model_layout.version() +
                      "' but the configuration produces '" + feature_layout(r.config).version() +
                      "'");
  }
  const Manifest manifest = load_manifest(f.manifest);
  std::vector<const ManifestEntry*> order;
  for (const auto& e : manifest.subjects) {
    order.push_back(&e);
  }
  std::sort(order.begin(), order.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
    return a->subject_id < b->subject_id;
  });

  FeatureExtractor extractor(r.config);
  ordered_json results = ordered_json::array();
  for (const auto* e : order) {
    const Recording rec = load_recording(*e);
    const std::vector<FeatureVector> vectors = extractor.extract(rec);
    if (vectors.empty()) {
      throw DataError("subject '" + rec.subject_id + "' has no complete window");
    }
    const auto estimates = is_ensemble
                               ? window_estimates(std::get<Ensemble>(model), vectors, r.config.uq_th)
                               : window_estimates(std::get<TrainedModel>(model), vectors);
    const int t = f.observe_day ? *f.observe_day : vectors.back().day_offset + 1;
    if (vectors.front().day_offset >= t) {
      throw DataError("subject '" + rec.subject_id + "' has no window before observe day " +
                      std::to_string(t));
    }
    const SubjectEstimate est = aggregate(estimates, t);
    const int rounded = static_cast<int>(std::lround(est.d_hat));
    ordered_json j;
    j["subject_id"] = est.subject_id;
    j["d_hat_day_offset"] = est.d_hat;
    j["estimated_date"] = format_iso_date(add_days(rec.start_day, rounded));
    j["n_windows_used"] = est.n_windows_used;
    j["fallback_used"] = est.fallback_used;
    results.push_back(std::move(j));
  }

  const std::string text = format_prediction_json(results);
  meta.set_config(r);
  meta.inputs["model"] = fs::path(f.model).generic_string();
  meta.inputs["manifest"] = fs::path(f.manifest).generic_string();
  meta.extra["observe_day"] = f.observe_day ? ordered_json(*f.observe_day) : ordered_json("last+1");
  if (f.out) {
    const fs::path out_path(*f.out);
    write_text(out_path, text);
    meta.outputs["predictions"] = out_path.generic_string();
    meta.write(meta_path(c, dir_of(out_path)));
  } else {
    out << text;
    meta.write(meta_path(c, fs::path(".")));
  }
}

// ---- evaluate ----------------------------------------------------------------

struct EvaluateFlags {
  DataSource source;
  std::string out;
  std::optional<std::string> curves_dir;
};

void run_evaluate(const EvaluateFlags& f, const Common& c, const PipelineFlags& pf, RunMeta& meta,
                  std::ostream& out) {
  const Resolved r = resolve(c, pf);
  require_uq_th(r.config);
  const LoadedTable data = load_examples(f.source, r.config, meta);
  const auto folds = loo_cv(data.table, training_config(r.config));
  EvaluationReport report = evaluate_report(folds, r.config.evaluation);
  report.label = data.label;
  report.storage_temps_c = data.storage_temps;
  report.strategy = to_string(r.config.strategy);
  report.uq_th = r.config.strategy == Strategy::ensemble ? r.config.uq_th : std::nullopt;
  report.seed = r.config.seed;

  const fs::path out_path(f.out);
  write_text(out_path, report_to_json(report));
  meta.outputs["report"] = out_path.generic_string();
  if (f.curves_dir) {
    fs::create_directories(*f.curves_dir);
    write_curves(report, *f.curves_dir);
    meta.outputs["curves_dir"] = fs::path(*f.curves_dir).generic_string();
  }
  meta.set_config(r);
  meta.write(meta_path(c, dir_of(out_path)));
  out << std::fixed << std::setprecision(3) << report.strategy << ": MAE " << report.mae
      << " d, ESD " << report.esd << " d over " << report.subjects.size()
      << " subjects (constant-mean baseline: MAE " << report.baseline_mae << " d, ESD "
      << report.baseline_esd << " d)\n";
}

// ---- report ------------------------------------------------------------------

struct ReportFlags {
  std::string report;
  std::optional<std::string> curves_dir;
};

void print_report(const EvaluationReport& rep, std::ostream& out) {
  out << std::fixed << std::setprecision(2);
  out << "dataset " << (rep.label.empty() ? "-" : rep.label) << ", strategy " << rep.strategy;
  if (rep.uq_th) {
    out << ", uq_th " << *rep.uq_th << " d";
  }
  out << ", seed " << rep.seed << "\n";
  out << "MAE " << rep.mae << " d   ESD " << rep.esd << " d   (baseline MAE " << rep.baseline_mae
      << " d, ESD " << rep.baseline_esd << " d)\n\n";

  out << std::left << std::setw(12) << "subject" << std::right << std::setw(8) << "D" << std::setw(10)
      << "D_hat" << std::setw(9) << "ESD" << std::setw(9) << "MAE" << std::setw(8) << "used"
      << std::setw(8) << "windows" << "\n";
  for (const auto& s : rep.subjects) {
    out << std::left << std::setw(12) << s.subject_id << std::right << std::setw(8)
        << s.sprouting_offset << std::setw(10) << s.d_hat << std::setw(9) << s.esd << std::setw(9)
        << s.mae << std::setw(8) << s.n_windows_used << std::setw(8) << s.n_windows
        << (s.fallback_used ? "  fallback" : "") << "\n";
  }

  if (!rep.tlag_curve.empty()) {
    out << "\nESD by observation lag (days before sprouting)\n";
    for (const auto& p : rep.tlag_curve) {
      out << std::setw(6) << p.t_lag << std::setw(10);
      if (std::isnan(p.mean_esd)) {
        out << "n/a";
      } else {
        out << p.mean_esd;
      }
      out << "  (" << p.n_subjects << " subjects";
      if (p.n_excluded) {
        out << ", " << p.n_excluded << " excluded";
      }
      out << ")\n";
    }
  }
  if (!rep.uq_sweep.empty()) {
    out << "\nUQ threshold sweep\n";
    for (const auto& p : rep.uq_sweep) {
      out << std::setw(10) << p.uq_th << "  MAE " << p.mae << "  ESD " << p.esd << "  retained "
          << p.retained_fraction * 100.0 << "%  fallbacks " << p.fallbacks << "\n";
    }
  }
  const auto& v = rep.calibration.variance;
  out << "\ncalibration (bin " << rep.calibration.bin_width << " d, rolling "
      << rep.calibration.rolling_n << "): Var(Y) " << v.var_y << " = E[Var(Y|Y_hat)] "
      << v.expected_conditional_var << " + Var(E[Y|Y_hat]) " << v.var_conditional_mean
      << "; Var(Y_hat) " << v.var_y_hat << "\n";
}

void run_report(const ReportFlags& f, const Common& c, RunMeta& meta, std::ostream& out) {
  std::ifstream in(f.report, std::ios::binary);
  if (!in) {
    throw InputError("cannot open '" + f.report + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const EvaluationReport rep = report_from_json(buf.str());
  print_report(rep, out);
  meta.inputs["report"] = fs::path(f.report).generic_string();
  if (f.curves_dir) {
    fs::create_directories(*f.curves_dir);
    write_curves(rep, *f.curves_dir);
    meta.outputs["curves_dir"] = fs::path(*f.curves_dir).generic_string();
  }
  PipelineFlags none;
  Common nc = c;
  meta.set_config(resolve(nc, none));
  meta.seed = rep.seed;
  meta.seed_source = "report";
  const fs::path default_dir = f.curves_dir ? fs::path(*f.curves_dir) : dir_of(f.report);
  meta.write(meta_path(c, default_dir));
}

// ---- error plumbing ----------------------------------------------------------

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

int report_error(std::ostream& err, ExitCode code, const char* kind, const std::string& what) {
  err << "sprout: error[" << kind << "]: " << one_line(what) << "\n";
  return code;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Predicts sprouting day from electrophysiological recordings", "sprout"};
  app.set_version_flag("--version", SPROUT_VERSION);
  app.require_subcommand(0, 1);

  // Checked after parsing so that unknown flags win over absent ones.
  std::vector<std::pair<CLI::App*, CLI::Option*>> required;
  auto need = [&required](CLI::App* sub, CLI::Option* opt) { required.emplace_back(sub, opt); };

  Common common;
  PipelineFlags pf;
  RunMeta meta;
  meta.args = args;

  SynthFlags synth_f;
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort (manifest + CSVs)");
  need(synth, synth->add_option("--out", synth_f.out, "output directory"));
  add_opt(synth, "--subjects", synth_f.subjects, "number of subjects");
  add_opt(synth, "--days-min", synth_f.days_min, "shortest horizon in days");
  add_opt(synth, "--days-max", synth_f.days_max, "longest horizon in days");
  add_opt(synth, "--rate-hz", synth_f.rate_hz, "sample rate when not --raw-256hz");
  synth->add_option_function<std::vector<double>>(
           "--band", [&](const std::vector<double>& v) { synth_f.band = v; },
           "signature band: LOW_HZ HIGH_HZ")
      ->expected(2);
  add_opt(synth, "--onset-days", synth_f.onset_days, "signature onset before sprouting");
  add_opt(synth, "--gain", synth_f.gain, "signature amplitude at sprouting (0 disables)");
  add_opt(synth, "--noise", synth_f.noise, "white noise std in volts");
  add_opt(synth, "--drift", synth_f.drift, "slow drift amplitude in volts");
  add_opt(synth, "--mains", synth_f.mains, "mains hum amplitude (--raw-256hz)");
  add_opt(synth, "--label", synth_f.label, "dataset label");
  add_opt(synth, "--storage-temp", synth_f.storage_temp, "storage temperature in deg C");
  add_opt(synth, "--start-day", synth_f.start_day, "first recording day (YYYY-MM-DD)");
  synth->add_flag("--raw-256hz", synth_f.raw_256hz, "emit 256 Hz signals with mains hum");
  add_common(synth, common);
  add_seed(synth, common);

  PreprocessFlags pre_f;
  auto* pre = app.add_subcommand("preprocess", "notch, low-pass and downsample recordings");
  need(pre, pre->add_option("--manifest", pre_f.manifest, "input manifest"));
  add_opt(pre, "--out-manifest", pre_f.out_manifest, "manifest for the conditioned CSVs");
  add_preprocess_flags(pre, pf);
  add_common(pre, common);

  FeaturesFlags feat_f;
  auto* feat = app.add_subcommand("features", "windowed CWT feature table");
  need(feat, feat->add_option("--manifest", feat_f.manifest, "input manifest"));
  need(feat, feat->add_option("--out", feat_f.out, "feature table CSV"));
  add_opt(feat, "--dump-scalogram", feat_f.dump_scalogram, "directory for per-window scalograms");
  add_preprocess_flags(feat, pf);
  add_feature_flags(feat, pf);
  add_common(feat, common);

  TrainFlags train_f;
  auto* train = app.add_subcommand("train", "fit a model on every labelled window");
  auto* train_manifest = add_opt(train, "--manifest", train_f.source.manifest, "input manifest");
  auto* train_features = add_opt(train, "--features", train_f.source.features, "feature table CSV");
  train_manifest->excludes(train_features);
  need(train, train->add_option("--model-out", train_f.model_out, "model JSON"));
  add_preprocess_flags(train, pf);
  add_feature_flags(train, pf);
  add_regress_flags(train, pf);
  add_common(train, common);
  add_seed(train, common);

  PredictFlags pred_f;
  auto* pred = app.add_subcommand("predict", "estimate each subject's sprouting day");
  need(pred, pred->add_option("--model", pred_f.model, "model JSON"));
  need(pred, pred->add_option("--manifest", pred_f.manifest, "input manifest"));
  add_opt(pred, "--observe-day", pred_f.observe_day, "use windows with day_offset < t");
  add_opt(pred, "--out", pred_f.out, "write predictions here instead of stdout");
  add_opt(pred, "--uq-th", pf.uq_th, "max 95% CI width in days (ensemble)");
  add_preprocess_flags(pred, pf);
  add_feature_flags(pred, pf);
  add_common(pred, common);

  EvaluateFlags eval_f;
  auto* eval = app.add_subcommand("evaluate", "leave-one-subject-out evaluation");
  auto* eval_manifest = add_opt(eval, "--manifest", eval_f.source.manifest, "input manifest");
  auto* eval_features = add_opt(eval, "--features", eval_f.source.features, "feature table CSV");
  eval_manifest->excludes(eval_features);
  need(eval, eval->add_option("--out", eval_f.out, "report JSON"));
  add_opt(eval, "--curves-dir", eval_f.curves_dir, "directory for plot-ready CSV curves");
  add_preprocess_flags(eval, pf);
  add_feature_flags(eval, pf);
  add_regress_flags(eval, pf);
  add_evaluate_flags(eval, pf);
  add_common(eval, common);
  add_seed(eval, common);

  ReportFlags rep_f;
  auto* rep = app.add_subcommand("report", "summarize a report JSON");
  need(rep, rep->add_option("--report", rep_f.report, "report JSON"));
  add_opt(rep, "--curves-dir", rep_f.curves_dir, "re-emit the CSV curves here");
  add_common(rep, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << SPROUT_VERSION << "\n";
    return kOk;
  } catch (const CLI::RequiredError& e) {
    return report_error(err, kMissingInput, "missing-input", e.what());
  } catch (const CLI::ParseError& e) {
    return report_error(err, kUsage, "usage", e.what());
  }
  for (const auto& [sub, opt] : required) {
    if (sub->parsed() && opt->count() == 0) {
      return report_error(err, kMissingInput, "missing-input",
                          opt->get_name() + " is required for " + sub->get_name());
    }
  }

  try {
    if (synth->parsed()) {
      meta.command = "synth";
      run_synth(synth_f, common, meta, out);
    } else if (pre->parsed()) {
      meta.command = "preprocess";
      run_preprocess(pre_f, common, pf, meta, out);
    } else if (feat->parsed()) {
      meta.command = "features";
      run_features(feat_f, common, pf, meta, out);
    } else if (train->parsed()) {
      meta.command = "train";
      if (!train_f.source.manifest && !train_f.source.features) {
        return report_error(err, kMissingInput, "missing-input",
                            "train needs --manifest or --features");
      }
      run_train(train_f, common, pf, meta, out);
    } else if (pred->parsed()) {
      meta.command = "predict";
      run_predict(pred_f, common, pf, meta, out);
    } else if (eval->parsed()) {
      meta.command = "evaluate";
      if (!eval_f.source.manifest && !eval_f.source.features) {
        return report_error(err, kMissingInput, "missing-input",
                            "evaluate needs --manifest or --features");
      }
      run_evaluate(eval_f, common, pf, meta, out);
    } else if (rep->parsed()) {
      meta.command = "report";
      run_report(rep_f, common, meta, out);
    } else {
      err << app.help();
      return report_error(err, kUsage, "usage",
                          "expected a subcommand: synth, preprocess, features, train, predict, "
                          "evaluate, report");
    }
  } catch (const ConfigError& e) {
    return report_error(err, kBadConfig, "config", e.what());
  } catch (const InputError& e) {
    return report_error(err, kMissingInput, "missing-input", e.what());
  } catch (const DataError& e) {
    return report_error(err, kBadData, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, kMissingInput, "missing-input", e.what());
  } catch (const std::exception& e) {
    return report_error(err, kFailure, "internal", e.what());
  }
  return kOk;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

} // namespace sprout::cli
