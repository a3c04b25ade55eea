#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/mat.hpp"
#include "dsc/signal.hpp"
#include "dsc/trainer.hpp"

namespace dsc {

struct FoldPlan {
  std::string mode;  // sequential | non-sequential
  std::size_t fold_count = 10;
  std::size_t downsample_factor = 1;
  std::vector<std::vector<std::size_t>> test_ids;
  std::vector<std::vector<std::size_t>> train_ids;  // downsampled
};

// Sequential mode makes contiguous time blocks; non-sequential shuffles
// indices with the seed before blocking. Training lists keep ascending order
// and then retain every downsample_factor-th index.
FoldPlan make_folds(std::size_t window_count, const std::string& mode, std::size_t fold_count,
                    std::size_t downsample_factor, std::uint64_t rng_seed);

struct Metrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  bool zero_denominator = false;  // some class had no predictions or no truth
};

// confusion rows are truth, columns are predictions.
Metrics metrics_from_confusion(const Mat& confusion);

struct FoldResult {
  std::size_t fold = 0;
  bool completed = false;
  std::string error;
  Metrics test;
  Metrics train;
  Mat test_confusion;
  Mat train_confusion;
  double silhouette_mean = 0.0;
  double silhouette_median = 0.0;
};

struct EvaluationReport {
  std::string subject_id;
  std::string mode;
  std::vector<std::string> label_names;
  std::size_t fold_count = 0;
  std::size_t completed_folds = 0;
  std::vector<FoldResult> folds;
  Mat pooled_confusion;  // sum over completed folds
  Metrics pooled;
  double mean_test_accuracy = 0.0;
  double median_test_accuracy = 0.0;
  double mean_train_accuracy = 0.0;
  double median_train_accuracy = 0.0;
  double mean_test_precision = 0.0;
  double mean_test_recall = 0.0;
  double mean_silhouette = 0.0;
  double median_silhouette = 0.0;
  std::string config_fingerprint;
};

// Full cross-validation: per fold, trains on the downsampled training
// indices, predicts the held-out fold, and scores both sets. Fold failures
// are recorded and aggregates cover completed folds only. A non-empty
// artifacts_dir receives per-fold checkpoints and run logs.
EvaluationReport run_cv(const WindowSet& ws, const TrainConfig& cfg, std::size_t jobs = 1,
                        const std::string& artifacts_dir = "");

inline constexpr const char* kReportFormatTag = "dsc.report/1";
nlohmann::json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

struct SweepEntry {
  std::string axis;  // delta | dim
  std::size_t value = 0;
  bool skipped = false;
  std::string note;
  EvaluationReport report;
};

struct SweepResult {
  std::vector<SweepEntry> entries;  // deltas first, then dims
  double fixed_setting_accuracy = 0.0;  // base delta at base embedding dim
  double best_accuracy = 0.0;
  std::string best_axis;
  std::size_t best_value = 0;
};

// One CV per grid point: every delta at the base embedding dim, every dim at
// the base delta. The (base delta, base dim) run is computed once and listed
// on both axes. Windows are cut from the preprocessed session per delta.
SweepResult sensitivity_sweep(const SignalSession& prep, const TrainConfig& base,
                              const std::vector<std::size_t>& deltas,
                              const std::vector<std::size_t>& dims, std::size_t window_step,
                              std::size_t jobs = 1);

// CSV table bodies (comma separated, header line first).
std::string confusion_csv(const Mat& confusion, const std::vector<std::string>& label_names);
std::string metrics_table_csv(const std::vector<EvaluationReport>& per_subject);
std::string sweep_axis_csv(const std::vector<std::pair<std::string, SweepResult>>& per_subject,
                           const std::string& axis);
std::string boxplot_csv(const std::vector<EvaluationReport>& per_subject);

}  // namespace dsc
