#include "sprout/evaluate.hpp"

#include "sprout/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace sprout {

using nlohmann::ordered_json;

TrainingConfig training_config(const PipelineConfig& config) {
  TrainingConfig t;
  t.strategy = config.strategy;
  t.spec = config.regressor;
  t.spec.seed = config.seed;
  t.uq_th = config.uq_th;
  t.n_members = config.n_members;
  t.seed = config.seed;
  t.jobs = config.jobs;
  return t;
}

void score_fold(FoldResult& fold) {
  if (fold.estimates.empty() || fold.estimates.size() != fold.targets.size()) {
    throw PreconditionError("fold '" + fold.held_out_subject + "' has no scored windows");
  }
  const int last_day = std::max_element(fold.estimates.begin(), fold.estimates.end(),
                                        [](const auto& a, const auto& b) {
                                          return a.day_offset < b.day_offset;
                                        })
                           ->day_offset;
  fold.subject_estimate = aggregate(fold.estimates, last_day + 1);
  fold.esd_j = std::abs(fold.subject_estimate.d_hat - static_cast<double>(fold.sprouting_offset));

  double err = 0.0;
  int used = 0;
  double base_err = 0.0;
  for (std::size_t i = 0; i < fold.estimates.size(); ++i) {
    const auto& e = fold.estimates[i];
    base_err += std::abs(fold.baseline_prediction - fold.targets[i]);
    if (e.retained) {
      err += std::abs(e.y_hat - fold.targets[i]);
      ++used;
    }
  }
  fold.baseline_mae_j = base_err / static_cast<double>(fold.estimates.size());
  if (used > 0) {
    fold.mae_j = err / used;
    return;
  }
  // Empty retained set: score the same fallback window the aggregate used.
  std::size_t best = 0;
  for (std::size_t i = 1; i < fold.estimates.size(); ++i) {
    if (fold.estimates[i].ci_halfwidth.value_or(0.0) <
        fold.estimates[best].ci_halfwidth.value_or(0.0)) {
      best = i;
    }
  }
  fold.mae_j = std::abs(fold.estimates[best].y_hat - fold.targets[best]);
}

std::vector<FoldResult> loo_cv(const ExampleTable& table, const TrainingConfig& config) {
  std::vector<std::string> subjects;
  for (const auto& ex : table.examples) {
    if (subjects.empty() || subjects.back() != ex.features.subject_id) {
      if (std::find(subjects.begin(), subjects.end(), ex.features.subject_id) != subjects.end()) {
        throw PreconditionError("example table is not grouped by subject");
      }
      subjects.push_back(ex.features.subject_id);
    }
  }
  if (subjects.size() < 2) {
    throw PreconditionError("leave-one-out needs at least 2 subjects with windows");
  }
  if (config.strategy == Strategy::ensemble && !config.uq_th) {
    throw PreconditionError("the ensemble strategy needs uq_th");
  }

  std::vector<FoldResult> folds(subjects.size());
  auto run_fold = [&](std::size_t j, int inner_jobs) {
    const std::string& held_out = subjects[j];
    std::vector<LabeledExample> train;
    std::vector<FeatureVector> test;
    std::vector<double> targets;
    std::set<std::string> train_ids;
    for (const auto& ex : table.examples) {
      if (ex.features.subject_id == held_out) {
        test.push_back(ex.features);
        targets.push_back(ex.target_days);
      } else {
        train.push_back(ex);
        train_ids.insert(ex.features.subject_id);
      }
    }
    if (train_ids.count(held_out) != 0) {
      throw DataError("leakage: subject '" + held_out + "' present in its own training fold");
    }

    FoldResult fold;
    fold.held_out_subject = held_out;
    fold.sprouting_offset = table.sprouting_offsets.at(held_out);
    fold.training_subjects.assign(train_ids.begin(), train_ids.end());
    fold.targets = std::move(targets);
    double sum = 0.0;
    for (const auto& ex : train) {
      sum += ex.target_days;
    }
    fold.baseline_prediction = sum / static_cast<double>(train.size());

    if (config.strategy == Strategy::single) {
      const auto model = fit(train, config.spec, table.layout);
      fold.estimates = window_estimates(model, test);
    } else {
      const auto ensemble =
          fit_ensemble(train, config.spec, table.layout, config.n_members, config.seed, inner_jobs);
      fold.estimates = window_estimates(ensemble, test, config.uq_th);
    }
    score_fold(fold);
    folds[j] = std::move(fold);
  };

  const auto jobs = static_cast<std::size_t>(std::max(1, config.jobs));
  if (jobs == 1) {
    for (std::size_t j = 0; j < subjects.size(); ++j) {
      run_fold(j, 1);
    }
    return folds;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < subjects.size(); j = next++) {
      try {
        run_fold(j, 1);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, subjects.size()); ++t) {
    pool.emplace_back(worker);
  }
  for (auto& t : pool) {
    t.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return folds;
}

std::vector<FoldResult> rescore(std::vector<FoldResult> folds, double uq_th) {
  for (auto& f : folds) {
    f.estimates = refilter(std::move(f.estimates), uq_th);
    score_fold(f);
  }
  return folds;
}

EvaluationReport compute_metrics(std::span<const FoldResult> folds, double percentile_step) {
  if (folds.empty()) {
    throw PreconditionError("compute_metrics needs at least one fold");
  }
  EvaluationReport report;
  double mae = 0.0;
  double esd = 0.0;
  double base_mae = 0.0;
  double base_esd = 0.0;
  std::vector<double> esds;
  for (const auto& f : folds) {
    mae += f.mae_j;
    esd += f.esd_j;
    base_mae += f.baseline_mae_j;
    double base_d = 0.0;
    for (const auto& e : f.estimates) {
      base_d += static_cast<double>(e.day_offset) + f.baseline_prediction;
    }
    base_esd += std::abs(base_d / static_cast<double>(f.estimates.size()) - f.sprouting_offset);
    esds.push_back(f.esd_j);

    SubjectMetrics s;
    s.subject_id = f.held_out_subject;
    s.mae = f.mae_j;
    s.esd = f.esd_j;
    s.sprouting_offset = f.sprouting_offset;
    s.d_hat = f.subject_estimate.d_hat;
    s.n_windows = static_cast<int>(f.estimates.size());
    s.n_windows_used = f.subject_estimate.n_windows_used;
    s.fallback_used = f.subject_estimate.fallback_used;
    report.subjects.push_back(std::move(s));
  }
  const auto n = static_cast<double>(folds.size());
  report.mae = mae / n;
  report.esd = esd / n;
  report.baseline_mae = base_mae / n;
  report.baseline_esd = base_esd / n;

  std::sort(esds.begin(), esds.end());
  const int steps = static_cast<int>(std::floor(100.0 / percentile_step + 1e-9));
  for (int i = 0; i <= steps; ++i) {
    const double p = std::min(100.0, i * percentile_step);
    report.esd_percentiles.push_back(PercentilePoint{p, percentile_sorted(esds, p)});
  }
  if (report.esd_percentiles.back().percentile < 100.0) {
    report.esd_percentiles.push_back(PercentilePoint{100.0, esds.back()});
  }
  return report;
}

std::vector<TlagPoint> tlag_sweep(std::span<const FoldResult> folds, int lag_min, int lag_max) {
  std::vector<TlagPoint> curve;
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    TlagPoint point;
    point.t_lag = lag;
    double sum = 0.0;
    for (const auto& f : folds) {
      const int t = f.sprouting_offset + lag;
      const bool observable = std::any_of(f.estimates.begin(), f.estimates.end(),
                                          [t](const auto& e) { return e.day_offset < t; });
      if (!observable) {
        ++point.n_excluded;
        continue;
      }
      const auto est = aggregate(f.estimates, t);
      sum += std::abs(est.d_hat - static_cast<double>(f.sprouting_offset));
      ++point.n_subjects;
    }
    point.mean_esd = point.n_subjects > 0 ? sum / point.n_subjects
                                          : std::numeric_limits<double>::quiet_NaN();
    curve.push_back(point);
  }
  return curve;
}

namespace {

double population_variance(std::span<const double> v) {
  if (v.empty()) {
    return 0.0;
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
  }
  return ss / static_cast<double>(v.size());
}

} // namespace

VarianceDecomposition decompose_variance(std::span<const double> y, std::span<const double> y_hat,
                                         std::span<const long long> groups) {
  if (y.size() != y_hat.size() || y.size() != groups.size()) {
    throw PreconditionError("decompose_variance: length mismatch");
  }
  VarianceDecomposition d;
  if (y.empty()) {
    return d;
  }
  d.var_y = population_variance(y);
  d.var_y_hat = population_variance(y_hat);
  const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::map<long long, std::vector<double>> cells;
  for (std::size_t i = 0; i < y.size(); ++i) {
    cells[groups[i]].push_back(y[i]);
  }
  const auto total = static_cast<double>(y.size());
  for (const auto& [key, values] : cells) {
    const double w = static_cast<double>(values.size()) / total;
    const double m =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    d.expected_conditional_var += w * population_variance(values);
    d.var_conditional_mean += w * (m - mean_y) * (m - mean_y);
  }
  return d;
}

VarianceDecomposition decompose_variance_exact(std::span<const double> y,
                                               std::span<const double> y_hat) {
  std::map<double, long long> ids;
  std::vector<long long> groups;
  groups.reserve(y_hat.size());
  for (double v : y_hat) {
    groups.push_back(ids.emplace(v, static_cast<long long>(ids.size())).first->second);
  }
  return decompose_variance(y, y_hat, groups);
}

CalibrationTable calibration_curves(std::span<const FoldResult> folds, double bin_width,
                                    int rolling_n, int low_support_count) {
  if (!(bin_width > 0.0)) {
    throw PreconditionError("bin_width must be positive");
  }
  if (rolling_n < 1) {
    throw PreconditionError("rolling_n must be at least 1");
  }
  CalibrationTable table;
  table.bin_width = bin_width;
  table.rolling_n = rolling_n;

  for (const auto& f : folds) {
    std::map<int, std::pair<double, int>> per_day;
    for (const auto& e : f.estimates) {
      auto& [sum, count] = per_day[e.day_offset];
      sum += e.y_hat;
      ++count;
    }
    std::vector<double> daily;
    std::vector<double> truth;
    for (const auto& [day, acc] : per_day) {
      daily.push_back(acc.first / acc.second);
      truth.push_back(static_cast<double>(f.sprouting_offset - day));
    }
    const auto smoothed = rolling_mean(daily, static_cast<std::size_t>(rolling_n));
    table.pooled_y.insert(table.pooled_y.end(), truth.begin(), truth.end());
    table.pooled_y_hat.insert(table.pooled_y_hat.end(), smoothed.begin(), smoothed.end());
  }

  std::vector<long long> groups;
  std::map<long long, std::vector<double>> cells;
  for (std::size_t i = 0; i < table.pooled_y.size(); ++i) {
    const auto k = static_cast<long long>(std::floor(table.pooled_y_hat[i] / bin_width));
    groups.push_back(k);
    cells[k].push_back(table.pooled_y[i]);
  }
  for (const auto& [k, values] : cells) {
    CalibrationBin bin;
    bin.lower = static_cast<double>(k) * bin_width;
    bin.upper = static_cast<double>(k + 1) * bin_width;
    bin.count = static_cast<int>(values.size());
    bin.mean_y =
        std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    bin.std_y = std::sqrt(population_variance(values));
    bin.low_support = bin.count < low_support_count;
    table.bins.push_back(bin);
  }
  table.variance = decompose_variance(table.pooled_y, table.pooled_y_hat, groups);
  return table;
}

EvaluationReport evaluate_report(std::span<const FoldResult> folds,
                                 const EvaluationOptions& options) {
  EvaluationReport report = compute_metrics(folds, options.percentile_step);
  report.tlag_curve = tlag_sweep(folds, options.tlag_min, options.tlag_max);
  report.calibration = calibration_curves(folds, options.bin_width, options.rolling_n,
                                          options.low_support_count);
  const bool has_ci = !folds.empty() && !folds.front().estimates.empty() &&
                      folds.front().estimates.front().ci_halfwidth.has_value();
  if (has_ci) {
    for (double th : options.uq_sweep) {
      const std::vector<FoldResult> copy(folds.begin(), folds.end());
      const auto swept = rescore(copy, th);
      const auto m = compute_metrics(swept, options.percentile_step);
      UqSweepPoint p;
      p.uq_th = th;
      p.mae = m.mae;
      p.esd = m.esd;
      std::size_t kept = 0;
      std::size_t total = 0;
      for (const auto& f : swept) {
        for (const auto& e : f.estimates) {
          kept += e.retained ? 1 : 0;
          ++total;
        }
        p.fallbacks += f.subject_estimate.fallback_used ? 1 : 0;
      }
      p.retained_fraction = total ? static_cast<double>(kept) / static_cast<double>(total) : 0.0;
      report.uq_sweep.push_back(p);
    }
  }
  return report;
}

namespace {

ordered_json number_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

double number_or_nan(const ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

} // namespace

std::string report_to_json(const EvaluationReport& r) {
  ordered_json j;
  j["format"] = "sprout-report/1";
  j["label"] = r.label;
  j["storage_temps_c"] = r.storage_temps_c;
  j["strategy"] = r.strategy;
  j["uq_th"] = r.uq_th ? ordered_json(*r.uq_th) : ordered_json(nullptr);
  j["seed"] = r.seed;
  j["n_subjects"] = r.subjects.size();
  j["mae"] = r.mae;
  j["esd"] = r.esd;
  j["baseline_mae"] = r.baseline_mae;
  j["baseline_esd"] = r.baseline_esd;

  ordered_json subjects = ordered_json::array();
  for (const auto& s : r.subjects) {
    subjects.push_back({{"subject_id", s.subject_id},
                        {"mae", s.mae},
                        {"esd", s.esd},
                        {"sprouting_day_offset", s.sprouting_offset},
                        {"d_hat_day_offset", s.d_hat},
                        {"n_windows", s.n_windows},
                        {"n_windows_used", s.n_windows_used},
                        {"fallback_used", s.fallback_used}});
  }
  j["subjects"] = std::move(subjects);

  ordered_json pct = ordered_json::array();
  for (const auto& p : r.esd_percentiles) {
    pct.push_back({{"percentile", p.percentile}, {"esd", p.esd}});
  }
  j["esd_percentiles"] = std::move(pct);

  ordered_json tlag = ordered_json::array();
  for (const auto& p : r.tlag_curve) {
    tlag.push_back({{"t_lag", p.t_lag},
                    {"mean_esd", number_or_null(p.mean_esd)},
                    {"n_subjects", p.n_subjects},
                    {"n_excluded", p.n_excluded}});
  }
  j["tlag_curve"] = std::move(tlag);

  ordered_json bins = ordered_json::array();
  for (const auto& b : r.calibration.bins) {
    bins.push_back({{"y_hat_lower", b.lower},
                    {"y_hat_upper", b.upper},
                    {"mean_y", b.mean_y},
                    {"std_y", b.std_y},
                    {"count", b.count},
                    {"low_support", b.low_support}});
  }
  const auto& v = r.calibration.variance;
  j["calibration"] = {{"bin_width", r.calibration.bin_width},
                      {"rolling_n", r.calibration.rolling_n},
                      {"sign_convention", "days until sprouting (display negates)"},
                      {"bins", std::move(bins)},
                      {"variance_decomposition",
                       {{"var_y", v.var_y},
                        {"var_y_hat", v.var_y_hat},
                        {"expected_conditional_var", v.expected_conditional_var},
                        {"var_conditional_mean", v.var_conditional_mean}}}};

  ordered_json sweep = ordered_json::array();
  for (const auto& p : r.uq_sweep) {
    sweep.push_back({{"uq_th", p.uq_th},
                     {"mae", p.mae},
                     {"esd", p.esd},
                     {"retained_fraction", p.retained_fraction},
                     {"fallbacks", p.fallbacks}});
  }
  j["uq_sweep"] = std::move(sweep);
  return j.dump(2);
}

EvaluationReport report_from_json(const std::string& text) {
  EvaluationReport r;
  try {
    const auto j = ordered_json::parse(text);
    if (j.value("format", std::string{}) != "sprout-report/1") {
      throw DataError("not a sprout report (format tag missing or unsupported)");
    }
    r.label = j.at("label").get<std::string>();
    r.storage_temps_c = j.at("storage_temps_c").get<std::vector<int>>();
    r.strategy = j.at("strategy").get<std::string>();
    if (!j.at("uq_th").is_null()) {
      r.uq_th = j.at("uq_th").get<double>();
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mae = j.at("mae").get<double>();
    r.esd = j.at("esd").get<double>();
    r.baseline_mae = j.at("baseline_mae").get<double>();
    r.baseline_esd = j.at("baseline_esd").get<double>();
    for (const auto& s : j.at("subjects")) {
      SubjectMetrics m;
      m.subject_id = s.at("subject_id").get<std::string>();
      m.mae = s.at("mae").get<double>();
      m.esd = s.at("esd").get<double>();
      m.sprouting_offset = s.at("sprouting_day_offset").get<int>();
      m.d_hat = s.at("d_hat_day_offset").get<double>();
      m.n_windows = s.at("n_windows").get<int>();
      m.n_windows_used = s.at("n_windows_used").get<int>();
      m.fallback_used = s.at("fallback_used").get<bool>();
      r.subjects.push_back(std::move(m));
    }
    for (const auto& p : j.at("esd_percentiles")) {
      r.esd_percentiles.push_back({p.at("percentile").get<double>(), p.at("esd").get<double>()});
    }
    for (const auto& p : j.at("tlag_curve")) {
      r.tlag_curve.push_back({p.at("t_lag").get<int>(), number_or_nan(p.at("mean_esd")),
                              p.at("n_subjects").get<int>(), p.at("n_excluded").get<int>()});
    }
    const auto& cal = j.at("calibration");
    r.calibration.bin_width = cal.at("bin_width").get<double>();
    r.calibration.rolling_n = cal.at("rolling_n").get<int>();
    for (const auto& b : cal.at("bins")) {
      CalibrationBin bin;
      bin.lower = b.at("y_hat_lower").get<double>();
      bin.upper = b.at("y_hat_upper").get<double>();
      bin.mean_y = b.at("mean_y").get<double>();
      bin.std_y = b.at("std_y").get<double>();
      bin.count = b.at("count").get<int>();
      bin.low_support = b.at("low_support").get<bool>();
      r.calibration.bins.push_back(bin);
    }
    const auto& v = cal.at("variance_decomposition");
    r.calibration.variance = {v.at("var_y").get<double>(), v.at("var_y_hat").get<double>(),
                              v.at("expected_conditional_var").get<double>(),
                              v.at("var_conditional_mean").get<double>()};
    for (const auto& p : j.at("uq_sweep")) {
      r.uq_sweep.push_back({p.at("uq_th").get<double>(), p.at("mae").get<double>(),
                            p.at("esd").get<double>(), p.at("retained_fraction").get<double>(),
                            p.at("fallbacks").get<int>()});
    }
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_curves(const EvaluationReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) {
      throw InputError("cannot write '" + (dir / name).string() + "'");
    }
    out.precision(17);
    return out;
  };
  {
    auto out = open("esd_percentiles.csv");
    out << "percentile,esd_days\n";
    for (const auto& p : report.esd_percentiles) {
      out << p.percentile << ',' << p.esd << '\n';
    }
  }
  {
    auto out = open("tlag.csv");
    out << "t_lag,mean_esd_days,n_subjects,n_excluded\n";
    for (const auto& p : report.tlag_curve) {
      out << p.t_lag << ',';
      if (std::isfinite(p.mean_esd)) {
        out << p.mean_esd;
      }
      out << ',' << p.n_subjects << ',' << p.n_excluded << '\n';
    }
  }
  {
    auto out = open("calibration.csv");
    out << "y_hat_center,y_hat_lower,y_hat_upper,mean_y,std_y,count,low_support\n";
    // Display sign: negative values are days before sprouting.
    for (auto it = report.calibration.bins.rbegin(); it != report.calibration.bins.rend(); ++it) {
      const double center = it->center();
      out << (center == 0.0 ? 0.0 : -center) << ',' << -it->upper << ',' << -it->lower << ','
          << (it->mean_y == 0.0 ? 0.0 : -it->mean_y) << ',' << it->std_y << ',' << it->count
          << ',' << (it->low_support ? 1 : 0) << '\n';
    }
  }
}

} // namespace sprout
