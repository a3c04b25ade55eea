#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "dsc/errors.hpp"
#include "dsc/evaluation.hpp"
#include "dsc/synthetic.hpp"
#include "test_util.hpp"

using namespace dsc;

namespace {

Mat confusion_from_rows(const std::vector<std::vector<double>>& rows) {
  Mat m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

SignalSession separable_session(std::uint64_t seed, double duration_s = 30.0,
                                double noise = 0.02) {
  RegimeSpec calm;
  calm.label = "calm";
  calm.duration_s = duration_s;
  calm.eda_baseline = 1.0;
  calm.eda_bump_rate_hz = 0.05;
  calm.bvp_freq_hz = 1.0;
  calm.bvp_amplitude = 0.4;
  calm.temp_baseline = 33.0;
  calm.noise_sigma = noise;
  RegimeSpec stress = calm;
  stress.label = "stress";
  stress.eda_baseline = 4.0;
  stress.eda_bump_rate_hz = 0.4;
  stress.bvp_freq_hz = 2.2;
  stress.bvp_amplitude = 1.2;
  stress.temp_baseline = 34.5;
  return preprocess_session(generate({calm, stress}, seed));
}

TrainConfig small_cv_config(std::size_t delta) {
  TrainConfig cfg;
  cfg.delta = delta;
  cfg.embedding_dim = 6;
  cfg.epochs = 2;
  cfg.pretrain_epochs = 1;
  cfg.batch_size = 16;
  cfg.downsample_factor = 1;
  cfg.rng_seed = 9;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("evaluation");

TEST_CASE("sequential folds are contiguous blocks") {
  auto plan = make_folds(100, "sequential", 10, 1, 0);
  REQUIRE(plan.test_ids.size() == 10);
  for (std::size_t f = 0; f < 10; ++f) {
    REQUIRE(plan.test_ids[f].size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(plan.test_ids[f][i] == 10 * f + i);
    CHECK(plan.train_ids[f].size() == 90);
  }
}

TEST_CASE("folds partition the indices") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 20 + rng() % 80;
    const std::string mode = rep % 2 == 0 ? "sequential" : "non-sequential";
    auto plan = make_folds(n, mode, 10, 1, rng());
    std::vector<std::size_t> seen;
    for (const auto& fold : plan.test_ids) {
      seen.insert(seen.end(), fold.begin(), fold.end());
    }
    REQUIRE(seen.size() == n);
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(seen[i] == i);

    for (std::size_t f = 0; f < plan.fold_count; ++f) {
      std::set<std::size_t> test(plan.test_ids[f].begin(), plan.test_ids[f].end());
      for (auto i : plan.train_ids[f]) CHECK(test.count(i) == 0);
    }
  }
}

TEST_CASE("training indices are downsampled by the factor") {
  auto plan = make_folds(110, "sequential", 11, 10, 0);
  for (std::size_t f = 0; f < plan.fold_count; ++f) {
    CHECK(plan.train_ids[f].size() == 10);
  }
  auto every = make_folds(100, "sequential", 10, 1, 0);
  CHECK(every.train_ids[0].size() == 90);
}

TEST_CASE("fold construction rejects bad arguments") {
  CHECK_THROWS_AS(make_folds(5, "sequential", 10, 1, 0), DataError);
  CHECK_THROWS_AS(make_folds(100, "shuffled", 10, 1, 0), DataError);
  CHECK_THROWS_AS(make_folds(100, "sequential", 10, 0, 0), DataError);
  CHECK_THROWS_AS(make_folds(100, "sequential", 1, 1, 0), DataError);
}

TEST_CASE("metric identities on worked confusions") {
  auto perfect = metrics_from_confusion(confusion_from_rows({{5, 0}, {0, 5}}));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_precision == 1.0);
  CHECK(perfect.macro_recall == 1.0);
  CHECK_FALSE(perfect.zero_denominator);

  auto symmetric = metrics_from_confusion(confusion_from_rows({{3, 1}, {1, 3}}));
  CHECK(symmetric.accuracy == 0.75);
  CHECK(symmetric.macro_precision == 0.75);
  CHECK(symmetric.macro_recall == 0.75);

  // degenerate classifier: everything lands in the most frequent class
  auto degen = metrics_from_confusion(confusion_from_rows({{6, 0}, {4, 0}}));
  CHECK(degen.accuracy == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(degen.macro_precision == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(degen.macro_recall == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(degen.zero_denominator);
  CHECK(degen.micro_precision == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("metrics reject malformed confusions") {
  CHECK_THROWS_AS(metrics_from_confusion(Mat(0, 0)), DataError);
  CHECK_THROWS_AS(metrics_from_confusion(Mat(2, 3)), DataError);
  CHECK_THROWS_AS(metrics_from_confusion(confusion_from_rows({{1.5, 0}, {0, 1}})), DataError);
  CHECK_THROWS_AS(metrics_from_confusion(confusion_from_rows({{-1, 0}, {0, 1}})), DataError);
  CHECK_THROWS_AS(metrics_from_confusion(Mat(2, 2)), DataError);
}

TEST_CASE("cross validation on a separable session") {
  auto prep = separable_session(3);
  WindowSet ws = make_windows(prep, 64, 32);
  REQUIRE(ws.size() >= 20);
  TrainConfig cfg = small_cv_config(64);
  auto report = run_cv(ws, cfg);

  CHECK(report.folds.size() == 10);
  CHECK(report.completed_folds == 10);
  INFO("mean test accuracy ", report.mean_test_accuracy);
  CHECK(report.mean_test_accuracy >= 0.9);

  double acc_sum = 0.0;
  double total_tested = 0.0;
  for (const auto& fr : report.folds) {
    REQUIRE(fr.completed);
    double fold_total = 0.0;
    for (double v : fr.test_confusion.d) fold_total += v;
    CHECK(fold_total == static_cast<double>(
        make_folds(ws.size(), cfg.split_mode, 10, 1, cfg.rng_seed).test_ids[fr.fold].size()));
    acc_sum += fr.test.accuracy;
  }
  for (double v : report.pooled_confusion.d) total_tested += v;
  CHECK(total_tested == static_cast<double>(ws.size()));
  CHECK(std::abs(report.mean_test_accuracy - acc_sum / 10.0) < 1e-12);

  double trace = 0.0;
  for (std::size_t c = 0; c < report.pooled_confusion.rows; ++c) {
    trace += report.pooled_confusion.at(c, c);
  }
  CHECK(report.pooled.accuracy == doctest::Approx(trace / total_tested).epsilon(1e-15));

  CHECK(report.mean_train_accuracy > 0.0);
  CHECK(std::abs(report.mean_train_accuracy - report.mean_test_accuracy) < 0.25);
}

TEST_CASE("cross validation is deterministic") {
  auto prep = separable_session(7);
  WindowSet ws = make_windows(prep, 32, 32);
  TrainConfig cfg = small_cv_config(32);
  cfg.epochs = 1;
  auto a = report_to_json(run_cv(ws, cfg)).dump();
  auto b = report_to_json(run_cv(ws, cfg)).dump();
  CHECK(a == b);
}

TEST_CASE("parallel fold execution matches single-threaded") {
  auto prep = separable_session(11);
  WindowSet ws = make_windows(prep, 32, 32);
  TrainConfig cfg = small_cv_config(32);
  cfg.epochs = 1;
  auto serial = report_to_json(run_cv(ws, cfg, 1)).dump();
  auto parallel = report_to_json(run_cv(ws, cfg, 4)).dump();
  CHECK(serial == parallel);
}

TEST_CASE("folds that lose a class are skipped and recorded") {
  auto prep = separable_session(13);
  WindowSet ws = make_windows(prep, 32, 32);
  TrainConfig cfg = small_cv_config(32);
  cfg.epochs = 1;
  // factor large enough to keep a single training window per fold
  cfg.downsample_factor = ws.size();
  auto report = run_cv(ws, cfg);
  CHECK(report.completed_folds < report.fold_count);
  bool recorded = false;
  for (const auto& fr : report.folds) {
    if (!fr.completed && !fr.error.empty()) recorded = true;
  }
  CHECK(recorded);
}

TEST_CASE("sweep covers both axes and reuses the shared grid point") {
  auto prep = separable_session(17, 40.0);
  TrainConfig base = small_cv_config(64);
  base.epochs = 1;
  auto sweep = sensitivity_sweep(prep, base, {32, 64}, {6, 8}, 64);

  REQUIRE(sweep.entries.size() == 4);
  CHECK(sweep.entries[0].axis == "delta");
  CHECK(sweep.entries[0].value == 32);
  CHECK(sweep.entries[3].axis == "dim");
  CHECK(sweep.entries[3].value == 8);
  for (const auto& entry : sweep.entries) CHECK_FALSE(entry.skipped);

  // base delta at base dim appears once per axis with identical numbers
  CHECK(sweep.entries[1].report.mean_test_accuracy ==
        sweep.entries[2].report.mean_test_accuracy);
  CHECK(sweep.fixed_setting_accuracy == sweep.entries[1].report.mean_test_accuracy);
  CHECK(sweep.best_accuracy >= sweep.fixed_setting_accuracy);
  for (const auto& entry : sweep.entries) {
    if (!entry.skipped) CHECK(sweep.best_accuracy >= entry.report.mean_test_accuracy);
  }
}

TEST_CASE("sweep settings longer than the data are skipped with a note") {
  auto prep = separable_session(19);
  TrainConfig base = small_cv_config(32);
  base.epochs = 1;
  auto sweep = sensitivity_sweep(prep, base, {32, 1 << 20}, {6}, 32);
  REQUIRE(sweep.entries.size() == 3);
  CHECK_FALSE(sweep.entries[0].skipped);
  CHECK(sweep.entries[1].skipped);
  CHECK_FALSE(sweep.entries[1].note.empty());
}

TEST_CASE("csv tables carry the expected shapes") {
  auto prep = separable_session(23);
  WindowSet ws = make_windows(prep, 32, 32);
  TrainConfig cfg = small_cv_config(32);
  cfg.epochs = 1;
  auto report = run_cv(ws, cfg);

  auto conf = confusion_csv(report.pooled_confusion, ws.label_names);
  CHECK(conf.rfind("truth\\pred,calm,stress", 0) == 0);
  CHECK(std::count(conf.begin(), conf.end(), '\n') == 3);

  std::vector<EvaluationReport> subjects = {report, report};
  auto table = metrics_table_csv(subjects);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);  // header + 2 rows + mean
  CHECK(table.find("test_accuracy") != std::string::npos);

  auto box = boxplot_csv(subjects);
  CHECK(std::count(box.begin(), box.end(), '\n') == 3);
  CHECK(box.rfind("subject,min,q1,median,q3,max", 0) == 0);

  TrainConfig base = small_cv_config(32);
  base.epochs = 1;
  auto sweep = sensitivity_sweep(prep, base, {32}, {6, 8}, 32);
  std::vector<std::pair<std::string, SweepResult>> per_subject = {{"s1", sweep}, {"s2", sweep}};
  auto axis_csv = sweep_axis_csv(per_subject, "dim");
  CHECK(axis_csv.rfind("subject,dim_6,dim_8,best", 0) == 0);
  CHECK(std::count(axis_csv.begin(), axis_csv.end(), '\n') == 3);
  // best flag names the row maximum
  const auto first_row_start = axis_csv.find("s1,");
  const auto first_row_end = axis_csv.find('\n', first_row_start);
  const auto row = axis_csv.substr(first_row_start, first_row_end - first_row_start);
  const double a6 = sweep.entries[1].report.mean_test_accuracy;
  const double a8 = sweep.entries[2].report.mean_test_accuracy;
  CHECK(row.find(a6 >= a8 ? "dim_6" : "dim_8") != std::string::npos);
}

TEST_CASE("report json is tagged, complete, and round trips") {
  auto prep = separable_session(29);
  WindowSet ws = make_windows(prep, 32, 32);
  TrainConfig cfg = small_cv_config(32);
  cfg.epochs = 1;
  auto report = run_cv(ws, cfg);
  auto j = report_to_json(report);
  CHECK(j.at("format") == kReportFormatTag);
  CHECK(j.at("folds").size() == 10);
  CHECK(j.at("completed_folds") == 10);
  CHECK(j.at("label_names") == nlohmann::json(ws.label_names));
  CHECK(j.contains("mean_test_accuracy"));
  CHECK(j.contains("pooled_confusion"));
  CHECK(j.at("config").is_string());

  auto back = report_from_json(j);
  CHECK(report_to_json(back).dump() == j.dump());
  CHECK_THROWS_AS(report_from_json(nlohmann::json{{"format", "dsc.report/9"}}), DataError);
}

TEST_CASE("cross validation writes per-fold artifacts on request") {
  auto prep = separable_session(33);
  WindowSet ws = make_windows(prep, 32, 32);
  TrainConfig cfg = small_cv_config(32);
  cfg.epochs = 1;
  testutil::TempDir dir;
  const std::string artifacts = dir.str() + "/folds";
  auto report = run_cv(ws, cfg, 1, artifacts);
  for (std::size_t f = 0; f < report.fold_count; ++f) {
    if (!report.folds[f].completed) continue;
    const std::string stem = artifacts + "/fold_" + std::to_string(f);
    auto tm = read_checkpoint(stem + "_checkpoint.json");
    CHECK(tm.history.size() == cfg.pretrain_epochs + cfg.epochs);
    CHECK(std::filesystem::file_size(stem + "_run.jsonl") > 0);
  }
}

TEST_SUITE_END();
