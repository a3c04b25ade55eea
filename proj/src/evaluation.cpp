#include "dsc/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dsc/clustering.hpp"
#include "dsc/errors.hpp"
#include "dsc/gru.hpp"

namespace dsc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Mat confusion_from(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t k) {
  Mat m(k, k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i])) += 1.0;
  }
  return m;
}

// Hard cluster assignments and embeddings for the silhouette of one fold;
// degenerate foldings (fewer than 2 live clusters) score 0.
void fold_silhouette(const TrainedModel& tm, const WindowSet& ws,
                     const std::vector<std::size_t>& ids, const Mat& memberships,
                     FoldResult& out) {
  std::vector<std::size_t> assign(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < memberships.cols; ++c) {
      if (memberships.at(t, c) > memberships.at(t, arg)) arg = c;
    }
    assign[t] = arg;
  }
  try {
    Mat z = embed_all(tm.model, ws, ids);
    auto res = silhouette(z, assign);
    out.silhouette_mean = res.mean;
    out.silhouette_median = res.median;
  } catch (const DataError&) {
    out.silhouette_mean = 0.0;
    out.silhouette_median = 0.0;
  }
}

FoldResult run_fold(const WindowSet& ws, const TrainConfig& cfg, const FoldPlan& plan,
                    std::size_t fold, const std::set<int>& all_classes,
                    const std::string& artifacts_dir) {
  FoldResult res;
  res.fold = fold;
  const auto& train_ids = plan.train_ids[fold];
  const auto& test_ids = plan.test_ids[fold];
  try {
    std::vector<int> train_seeds;
    train_seeds.reserve(train_ids.size());
    for (auto i : train_ids) train_seeds.push_back(ws.seed_labels[i]);
    std::set<int> present(train_seeds.begin(), train_seeds.end());
    if (present != all_classes) {
      throw DataError("training fold lost " +
                      std::to_string(all_classes.size() - present.size()) +
                      " class(es) after downsampling by " +
                      std::to_string(plan.downsample_factor));
    }

    TrainConfig fold_cfg = cfg;
    fold_cfg.rng_seed = splitmix64(cfg.rng_seed ^ (fold + 1));
    auto model = make_autoencoder(fold_cfg.embedding_dim, fold_cfg.rng_seed);
    auto tm = train(model, ws, train_ids, train_seeds, fold_cfg);
    if (!artifacts_dir.empty()) {
      const std::string stem = artifacts_dir + "/fold_" + std::to_string(fold);
      write_checkpoint(stem + "_checkpoint.json", tm);
      write_run_log(stem + "_run.jsonl", tm);
    }

    const std::size_t k = ws.num_classes();
    auto on_test = predict(tm, ws, test_ids);
    std::vector<int> test_truth;
    test_truth.reserve(test_ids.size());
    for (auto i : test_ids) test_truth.push_back(ws.seed_labels[i]);
    res.test_confusion = confusion_from(test_truth, on_test.classes, k);
    res.test = metrics_from_confusion(res.test_confusion);

    auto on_train = predict(tm, ws, train_ids);
    res.train_confusion = confusion_from(train_seeds, on_train.classes, k);
    res.train = metrics_from_confusion(res.train_confusion);

    fold_silhouette(tm, ws, test_ids, on_test.memberships, res);
    res.completed = true;
  } catch (const std::exception& e) {
    res.completed = false;
    res.error = e.what();
  }
  return res;
}

nlohmann::json mat_to_rows(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"micro_precision", m.micro_precision},
          {"micro_recall", m.micro_recall},
          {"zero_denominator", m.zero_denominator}};
}

std::string format_cell(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

FoldPlan make_folds(std::size_t window_count, const std::string& mode, std::size_t fold_count,
                    std::size_t downsample_factor, std::uint64_t rng_seed) {
  if (mode != "sequential" && mode != "non-sequential") {
    throw DataError("make_folds: mode must be sequential or non-sequential, got '" + mode + "'");
  }
  if (fold_count < 2) throw DataError("make_folds: need at least 2 folds");
  if (window_count < fold_count) {
    throw DataError("make_folds: " + std::to_string(window_count) + " windows cannot fill " +
                    std::to_string(fold_count) + " folds");
  }
  if (downsample_factor == 0) throw DataError("make_folds: downsample factor must be positive");

  std::vector<std::size_t> order(window_count);
  std::iota(order.begin(), order.end(), 0);
  if (mode == "non-sequential") {
    std::mt19937_64 rng(rng_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  FoldPlan plan;
  plan.mode = mode;
  plan.fold_count = fold_count;
  plan.downsample_factor = downsample_factor;
  plan.test_ids.resize(fold_count);
  plan.train_ids.resize(fold_count);

  const std::size_t base = window_count / fold_count;
  const std::size_t extra = window_count % fold_count;
  std::size_t at = 0;
  for (std::size_t f = 0; f < fold_count; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    plan.test_ids[f].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                            order.begin() + static_cast<std::ptrdiff_t>(at + size));
    at += size;
  }

  for (std::size_t f = 0; f < fold_count; ++f) {
    std::vector<bool> held(window_count, false);
    for (auto i : plan.test_ids[f]) held[i] = true;
    std::vector<std::size_t> train;
    train.reserve(window_count - plan.test_ids[f].size());
    for (std::size_t i = 0; i < window_count; ++i) {
      if (!held[i]) train.push_back(i);
    }
    for (std::size_t i = 0; i < train.size(); i += downsample_factor) {
      plan.train_ids[f].push_back(train[i]);
    }
  }
  return plan;
}

Metrics metrics_from_confusion(const Mat& confusion) {
  if (confusion.rows == 0 || confusion.rows != confusion.cols) {
    throw DataError("metrics: confusion matrix must be square and non-empty, got " +
                    std::to_string(confusion.rows) + "x" + std::to_string(confusion.cols));
  }
  double total = 0.0;
  for (double v : confusion.d) {
    if (v < 0.0 || v != std::floor(v)) {
      throw DataError("metrics: confusion entries must be non-negative integers");
    }
    total += v;
  }
  if (total == 0.0) throw DataError("metrics: confusion matrix is empty");

  const std::size_t k = confusion.rows;
  Metrics m;
  double trace = 0.0;
  double prec_sum = 0.0;
  double rec_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = confusion.at(c, c);
    trace += tp;
    double col = 0.0;
    double row = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      col += confusion.at(i, c);
      row += confusion.at(c, i);
    }
    if (col > 0.0) {
      prec_sum += tp / col;
    } else {
      m.zero_denominator = true;
    }
    if (row > 0.0) {
      rec_sum += tp / row;
    } else {
      m.zero_denominator = true;
    }
  }
  m.accuracy = trace / total;
  m.macro_precision = prec_sum / static_cast<double>(k);
  m.macro_recall = rec_sum / static_cast<double>(k);
  m.micro_precision = trace / total;
  m.micro_recall = trace / total;
  return m;
}

EvaluationReport run_cv(const WindowSet& ws, const TrainConfig& cfg, std::size_t jobs,
                        const std::string& artifacts_dir) {
  validate_config(cfg);
  FoldPlan plan = make_folds(ws.size(), cfg.split_mode, 10, cfg.resolved_downsample(),
                             cfg.rng_seed);
  std::set<int> all_classes(ws.seed_labels.begin(), ws.seed_labels.end());
  if (!artifacts_dir.empty()) std::filesystem::create_directories(artifacts_dir);

  EvaluationReport report;
  report.subject_id = ws.subject_id;
  report.mode = plan.mode;
  report.label_names = ws.label_names;
  report.fold_count = plan.fold_count;
  report.config_fingerprint = config_fingerprint(cfg);
  report.folds.resize(plan.fold_count);

  if (jobs <= 1) {
    for (std::size_t f = 0; f < plan.fold_count; ++f) {
      report.folds[f] = run_fold(ws, cfg, plan, f, all_classes, artifacts_dir);
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t f = next.fetch_add(1);
        if (f >= plan.fold_count) return;
        report.folds[f] = run_fold(ws, cfg, plan, f, all_classes, artifacts_dir);
      }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(jobs, plan.fold_count);
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  const std::size_t k = ws.num_classes();
  report.pooled_confusion = Mat(k, k);
  std::vector<double> test_acc, train_acc, test_prec, test_rec, silh;
  for (const auto& fr : report.folds) {
    if (!fr.completed) continue;
    report.completed_folds++;
    for (std::size_t i = 0; i < fr.test_confusion.size(); ++i) {
      report.pooled_confusion.d[i] += fr.test_confusion.d[i];
    }
    test_acc.push_back(fr.test.accuracy);
    train_acc.push_back(fr.train.accuracy);
    test_prec.push_back(fr.test.macro_precision);
    test_rec.push_back(fr.test.macro_recall);
    silh.push_back(fr.silhouette_mean);
  }
  if (report.completed_folds > 0) {
    report.pooled = metrics_from_confusion(report.pooled_confusion);
  }
  report.mean_test_accuracy = mean_of(test_acc);
  report.median_test_accuracy = median_of(test_acc);
  report.mean_train_accuracy = mean_of(train_acc);
  report.median_train_accuracy = median_of(train_acc);
  report.mean_test_precision = mean_of(test_prec);
  report.mean_test_recall = mean_of(test_rec);
  report.mean_silhouette = mean_of(silh);
  report.median_silhouette = median_of(silh);
  return report;
}

nlohmann::json report_to_json(const EvaluationReport& report) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& fr : report.folds) {
    nlohmann::json j = {{"fold", fr.fold}, {"completed", fr.completed}};
    if (fr.completed) {
      j["test"] = metrics_to_json(fr.test);
      j["train"] = metrics_to_json(fr.train);
      j["test_confusion"] = mat_to_rows(fr.test_confusion);
      j["train_confusion"] = mat_to_rows(fr.train_confusion);
      j["silhouette_mean"] = fr.silhouette_mean;
      j["silhouette_median"] = fr.silhouette_median;
    } else {
      j["error"] = fr.error;
    }
    folds.push_back(j);
  }
  return {{"format", kReportFormatTag},
          {"subject", report.subject_id},
          {"mode", report.mode},
          {"label_names", report.label_names},
          {"fold_count", report.fold_count},
          {"completed_folds", report.completed_folds},
          {"folds", folds},
          {"pooled_confusion", mat_to_rows(report.pooled_confusion)},
          {"pooled", metrics_to_json(report.pooled)},
          {"mean_test_accuracy", report.mean_test_accuracy},
          {"median_test_accuracy", report.median_test_accuracy},
          {"mean_train_accuracy", report.mean_train_accuracy},
          {"median_train_accuracy", report.median_train_accuracy},
          {"mean_test_precision", report.mean_test_precision},
          {"mean_test_recall", report.mean_test_recall},
          {"mean_silhouette", report.mean_silhouette},
          {"median_silhouette", report.median_silhouette},
          {"config", report.config_fingerprint}};
}

EvaluationReport report_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != kReportFormatTag) {
    throw DataError("report: missing or unsupported format tag");
  }
  auto mat_from_rows = [](const nlohmann::json& rows) {
    Mat m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t c = 0; c < m.cols; ++c) m.at(i, c) = rows[i][c].get<double>();
    }
    return m;
  };
  auto metrics_from = [](const nlohmann::json& mj) {
    Metrics m;
    m.accuracy = mj.at("accuracy").get<double>();
    m.macro_precision = mj.at("macro_precision").get<double>();
    m.macro_recall = mj.at("macro_recall").get<double>();
    m.micro_precision = mj.at("micro_precision").get<double>();
    m.micro_recall = mj.at("micro_recall").get<double>();
    m.zero_denominator = mj.at("zero_denominator").get<bool>();
    return m;
  };

  EvaluationReport r;
  r.subject_id = j.at("subject").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.label_names = j.at("label_names").get<std::vector<std::string>>();
  r.fold_count = j.at("fold_count").get<std::size_t>();
  r.completed_folds = j.at("completed_folds").get<std::size_t>();
  for (const auto& fj : j.at("folds")) {
    FoldResult fr;
    fr.fold = fj.at("fold").get<std::size_t>();
    fr.completed = fj.at("completed").get<bool>();
    if (fr.completed) {
      fr.test = metrics_from(fj.at("test"));
      fr.train = metrics_from(fj.at("train"));
      fr.test_confusion = mat_from_rows(fj.at("test_confusion"));
      fr.train_confusion = mat_from_rows(fj.at("train_confusion"));
      fr.silhouette_mean = fj.at("silhouette_mean").get<double>();
      fr.silhouette_median = fj.at("silhouette_median").get<double>();
    } else {
      fr.error = fj.at("error").get<std::string>();
    }
    r.folds.push_back(std::move(fr));
  }
  r.pooled_confusion = mat_from_rows(j.at("pooled_confusion"));
  r.pooled = metrics_from(j.at("pooled"));
  r.mean_test_accuracy = j.at("mean_test_accuracy").get<double>();
  r.median_test_accuracy = j.at("median_test_accuracy").get<double>();
  r.mean_train_accuracy = j.at("mean_train_accuracy").get<double>();
  r.median_train_accuracy = j.at("median_train_accuracy").get<double>();
  r.mean_test_precision = j.at("mean_test_precision").get<double>();
  r.mean_test_recall = j.at("mean_test_recall").get<double>();
  r.mean_silhouette = j.at("mean_silhouette").get<double>();
  r.median_silhouette = j.at("median_silhouette").get<double>();
  r.config_fingerprint = j.at("config").get<std::string>();
  return r;
}

SweepResult sensitivity_sweep(const SignalSession& prep, const TrainConfig& base,
                              const std::vector<std::size_t>& deltas,
                              const std::vector<std::size_t>& dims, std::size_t window_step,
                              std::size_t jobs) {
  SweepResult out;
  bool have_fixed = false;
  EvaluationReport fixed_report;

  auto run_setting = [&](std::size_t delta, std::size_t dim, SweepEntry& entry) {
    TrainConfig cfg = base;
    cfg.delta = delta;
    cfg.embedding_dim = dim;
    try {
      WindowSet ws = make_windows(prep, delta, window_step);
      entry.report = run_cv(ws, cfg, jobs);
    } catch (const DataError& e) {
      entry.skipped = true;
      entry.note = e.what();
    }
  };

  for (std::size_t delta : deltas) {
    SweepEntry entry;
    entry.axis = "delta";
    entry.value = delta;
    run_setting(delta, base.embedding_dim, entry);
    if (!entry.skipped && delta == base.delta) {
      fixed_report = entry.report;
      have_fixed = true;
    }
    out.entries.push_back(std::move(entry));
  }
  for (std::size_t dim : dims) {
    SweepEntry entry;
    entry.axis = "dim";
    entry.value = dim;
    if (dim == base.embedding_dim && have_fixed) {
      entry.report = fixed_report;  // same grid point as the base delta run
    } else {
      run_setting(base.delta, dim, entry);
    }
    out.entries.push_back(std::move(entry));
  }

  bool first = true;
  for (const auto& entry : out.entries) {
    if (entry.skipped) continue;
    const double acc = entry.report.mean_test_accuracy;
    if (first || acc > out.best_accuracy) {
      out.best_accuracy = acc;
      out.best_axis = entry.axis;
      out.best_value = entry.value;
      first = false;
    }
    if (entry.axis == "delta" && entry.value == base.delta) {
      out.fixed_setting_accuracy = acc;
    }
  }
  return out;
}

std::string confusion_csv(const Mat& confusion, const std::vector<std::string>& label_names) {
  if (label_names.size() != confusion.rows) {
    throw DataError("confusion csv: " + std::to_string(label_names.size()) + " labels for " +
                    std::to_string(confusion.rows) + " classes");
  }
  std::ostringstream os;
  os << "truth\\pred";
  for (const auto& name : label_names) os << "," << name;
  os << "\n";
  for (std::size_t i = 0; i < confusion.rows; ++i) {
    os << label_names[i];
    for (std::size_t j = 0; j < confusion.cols; ++j) {
      os << "," << static_cast<long long>(confusion.at(i, j));
    }
    os << "\n";
  }
  return os.str();
}

std::string metrics_table_csv(const std::vector<EvaluationReport>& per_subject) {
  std::ostringstream os;
  os << "subject,train_accuracy,train_precision,train_recall,"
     << "test_accuracy,test_precision,test_recall,silhouette\n";
  std::vector<double> test_means;
  for (const auto& r : per_subject) {
    std::vector<double> train_prec, train_rec;
    for (const auto& fr : r.folds) {
      if (!fr.completed) continue;
      train_prec.push_back(fr.train.macro_precision);
      train_rec.push_back(fr.train.macro_recall);
    }
    os << r.subject_id << "," << format_cell(r.mean_train_accuracy) << ","
       << format_cell(mean_of(train_prec)) << "," << format_cell(mean_of(train_rec)) << ","
       << format_cell(r.mean_test_accuracy) << "," << format_cell(r.mean_test_precision) << ","
       << format_cell(r.mean_test_recall) << "," << format_cell(r.mean_silhouette) << "\n";
    test_means.push_back(r.mean_test_accuracy);
  }
  os << "mean,,,," << format_cell(mean_of(test_means)) << ",,,\n";
  return os.str();
}

std::string sweep_axis_csv(const std::vector<std::pair<std::string, SweepResult>>& per_subject,
                           const std::string& axis) {
  std::vector<std::size_t> values;
  for (const auto& [subject, sweep] : per_subject) {
    for (const auto& entry : sweep.entries) {
      if (entry.axis != axis) continue;
      if (std::find(values.begin(), values.end(), entry.value) == values.end()) {
        values.push_back(entry.value);
      }
    }
  }
  std::ostringstream os;
  os << "subject";
  for (auto v : values) os << "," << axis << "_" << v;
  os << ",best\n";
  for (const auto& [subject, sweep] : per_subject) {
    os << subject;
    double best = 0.0;
    std::size_t best_value = 0;
    bool first = true;
    for (auto v : values) {
      bool found = false;
      for (const auto& entry : sweep.entries) {
        if (entry.axis != axis || entry.value != v) continue;
        found = true;
        if (entry.skipped) {
          os << ",skipped";
        } else {
          const double acc = entry.report.mean_test_accuracy;
          os << "," << format_cell(acc);
          if (first || acc > best) {
            best = acc;
            best_value = v;
            first = false;
          }
        }
        break;
      }
      if (!found) os << ",";
    }
    if (first) {
      os << ",none\n";
    } else {
      os << "," << axis << "_" << best_value << "\n";
    }
  }
  return os.str();
}

std::string boxplot_csv(const std::vector<EvaluationReport>& per_subject) {
  std::ostringstream os;
  os << "subject,min,q1,median,q3,max\n";
  for (const auto& r : per_subject) {
    std::vector<double> acc;
    for (const auto& fr : r.folds) {
      if (fr.completed) acc.push_back(fr.test.accuracy);
    }
    if (acc.empty()) {
      os << r.subject_id << ",,,,,\n";
      continue;
    }
    std::sort(acc.begin(), acc.end());
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(acc.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
      const double w = pos - static_cast<double>(lo);
      return acc[lo] * (1.0 - w) + acc[hi] * w;
    };
    os << r.subject_id << "," << format_cell(acc.front()) << "," << format_cell(quantile(0.25))
       << "," << format_cell(quantile(0.5)) << "," << format_cell(quantile(0.75)) << ","
       << format_cell(acc.back()) << "\n";
  }
  return os.str();
}

}  // namespace dsc
