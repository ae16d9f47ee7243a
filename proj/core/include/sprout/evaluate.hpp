#pragma once

#include "sprout/config.hpp"
#include "sprout/estimate.hpp"
#include "sprout/features.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sprout {

struct TrainingConfig {
  Strategy strategy = Strategy::single;
  RegressorSpec spec;
  std::optional<double> uq_th;
  int n_members = kDefaultEnsembleSize;
  std::uint64_t seed = 0;
  int jobs = 1;
};

TrainingConfig training_config(const PipelineConfig& config);

// Outcome of one leave-one-subject-out fold.
struct FoldResult {
  std::string held_out_subject;
  int sprouting_offset = 0; // D_j
  std::vector<std::string> training_subjects;
  std::vector<WindowEstimate> estimates; // held-out windows, in window order
  std::vector<double> targets;           // Y for each estimate
  SubjectEstimate subject_estimate;      // observed through the last window
  double mae_j = 0.0; // over the retained windows (the fallback window if none)
  double esd_j = 0.0;
  double baseline_prediction = 0.0; // training-target mean
  double baseline_mae_j = 0.0;
};

// Fills subject_estimate, mae_j and esd_j from estimates/targets.
void score_fold(FoldResult& fold);

// Trains on all subjects but one, for every subject. Throws DataError if a
// held-out subject ever reaches its own training set.
std::vector<FoldResult> loo_cv(const ExampleTable& table, const TrainingConfig& config);

// Same folds with the retention rule re-applied at another UQ threshold.
std::vector<FoldResult> rescore(std::vector<FoldResult> folds, double uq_th);

struct PercentilePoint {
  double percentile = 0.0;
  double esd = 0.0;
};

struct TlagPoint {
  int t_lag = 0;
  double mean_esd = 0.0; // NaN when every subject is excluded
  int n_subjects = 0;
  int n_excluded = 0;
};

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_y = 0.0;
  double std_y = 0.0;
  int count = 0;
  bool low_support = false;

  double center() const { return 0.5 * (lower + upper); }
};

// Var(Y) = E[Var(Y|G)] + Var(E[Y|G]) for any grouping G; for a calibrated
// predictor Var(E[Y|G]) approaches Var(Y_hat).
struct VarianceDecomposition {
  double var_y = 0.0;
  double var_y_hat = 0.0;
  double expected_conditional_var = 0.0;
  double var_conditional_mean = 0.0;
};

// Population moments; `groups[i]` labels the conditioning cell of pair i.
VarianceDecomposition decompose_variance(std::span<const double> y, std::span<const double> y_hat,
                                         std::span<const long long> groups);
// Conditions on identical y_hat values.
VarianceDecomposition decompose_variance_exact(std::span<const double> y,
                                               std::span<const double> y_hat);

struct CalibrationTable {
  double bin_width = 5.0;
  int rolling_n = 7;
  std::vector<CalibrationBin> bins; // ascending Y_hat, internal days-until sign
  VarianceDecomposition variance;
  std::vector<double> pooled_y;
  std::vector<double> pooled_y_hat;
};

struct SubjectMetrics {
  std::string subject_id;
  double mae = 0.0;
  double esd = 0.0;
  int sprouting_offset = 0;
  double d_hat = 0.0;
  int n_windows = 0;
  int n_windows_used = 0;
  bool fallback_used = false;
};

struct UqSweepPoint {
  double uq_th = 0.0;
  double mae = 0.0;
  double esd = 0.0;
  double retained_fraction = 0.0;
  int fallbacks = 0;
};

struct EvaluationReport {
  std::string label;
  std::vector<int> storage_temps_c;
  std::string strategy;
  std::optional<double> uq_th;
  std::uint64_t seed = 0;

  double mae = 0.0;
  double esd = 0.0;
  double baseline_mae = 0.0;
  double baseline_esd = 0.0;
  std::vector<SubjectMetrics> subjects;
  std::vector<PercentilePoint> esd_percentiles;
  std::vector<TlagPoint> tlag_curve;
  CalibrationTable calibration;
  std::vector<UqSweepPoint> uq_sweep;
};

// Two-level MAE/ESD means and the ESD percentile curve.
EvaluationReport compute_metrics(std::span<const FoldResult> folds, double percentile_step = 1.0);

// ESD with observation day t = D_j + t_lag, for each lag in [lag_min, lag_max].
std::vector<TlagPoint> tlag_sweep(std::span<const FoldResult> folds, int lag_min = -29,
                                  int lag_max = 0);

// Per-day Y_hat (mean over that day's windows) smoothed with a trailing
// rolling mean, pooled across subjects and binned by Y_hat.
CalibrationTable calibration_curves(std::span<const FoldResult> folds, double bin_width = 5.0,
                                    int rolling_n = 7, int low_support_count = 10);

EvaluationReport evaluate_report(std::span<const FoldResult> folds,
                                 const EvaluationOptions& options);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

// esd_percentiles.csv, tlag.csv, calibration.csv; display axes use the
// negated (days-before-sprouting) sign.
void write_curves(const EvaluationReport& report, const std::filesystem::path& dir);

} // namespace sprout
