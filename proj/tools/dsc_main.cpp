#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsc/errors.hpp"
#include "dsc/evaluation.hpp"
#include "dsc/serialize.hpp"
#include "dsc/signal.hpp"
#include "dsc/synthetic.hpp"
#include "dsc/trainer.hpp"

namespace fs = std::filesystem;
using namespace dsc;

namespace {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RunConfig {
  std::string dataset;
  std::string cache_dir;
  std::string cache;
  std::string out = "runs";
  std::string run_id;
  std::string run;
  std::size_t jobs = 0;  // 0 resolves to the available cores
  std::string seeding_mode = "contextual";
  std::size_t window_step = 1;
  int sg_window = 11;
  int sg_order = 1;
  double target_hz = 64.0;
  TrainConfig train;
  std::string deltas = "128,256,600,960";
  std::string dims = "30,40,60";
  std::size_t subjects = 1;
  std::size_t segments = 2;
  double duration = 40.0;
  double noise = 0.05;
  std::size_t classes = 2;

  std::size_t resolved_jobs() const {
    if (jobs != 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
  }
};

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r\n");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r\n");
  return s.substr(from, to - from + 1);
}

std::map<std::string, std::string> load_key_values(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("config file " + path + " cannot be opened");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config file " + path + " line " + std::to_string(ln) +
                       ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw UsageError("config file " + path + " line " + std::to_string(ln) + ": empty key");
    }
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + v + "' as a non-negative integer");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int n = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + v + "' as a number");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + v + "' as an unsigned integer");
  }
}

void apply_key_values(RunConfig& rc, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "dataset") rc.dataset = value;
    else if (key == "cache_dir") rc.cache_dir = value;
    else if (key == "cache") rc.cache = value;
    else if (key == "out") rc.out = value;
    else if (key == "run_id") rc.run_id = value;
    else if (key == "run") rc.run = value;
    else if (key == "jobs") rc.jobs = parse_size(key, value);
    else if (key == "seeding_mode") rc.seeding_mode = value;
    else if (key == "window_step") rc.window_step = parse_size(key, value);
    else if (key == "sg_window") rc.sg_window = parse_int(key, value);
    else if (key == "sg_order") rc.sg_order = parse_int(key, value);
    else if (key == "target_hz") rc.target_hz = parse_real(key, value);
    else if (key == "delta") rc.train.delta = parse_size(key, value);
    else if (key == "embedding_dim") rc.train.embedding_dim = parse_size(key, value);
    else if (key == "epochs") rc.train.epochs = parse_size(key, value);
    else if (key == "gamma") rc.train.gamma = parse_real(key, value);
    else if (key == "lr_train") rc.train.lr_train = parse_real(key, value);
    else if (key == "lr_pretrain") rc.train.lr_pretrain = parse_real(key, value);
    else if (key == "pretrain_epochs") rc.train.pretrain_epochs = parse_size(key, value);
    else if (key == "batch_size") rc.train.batch_size = parse_size(key, value);
    else if (key == "rng_seed") rc.train.rng_seed = parse_u64(key, value);
    else if (key == "optimizer") rc.train.optimizer = value;
    else if (key == "split_mode") rc.train.split_mode = value;
    else if (key == "downsample_factor") rc.train.downsample_factor = parse_size(key, value);
    else if (key == "deltas") rc.deltas = value;
    else if (key == "dims") rc.dims = value;
    else if (key == "subjects") rc.subjects = parse_size(key, value);
    else if (key == "segments") rc.segments = parse_size(key, value);
    else if (key == "duration") rc.duration = parse_real(key, value);
    else if (key == "noise") rc.noise = parse_real(key, value);
    else if (key == "classes") rc.classes = parse_size(key, value);
    else throw UsageError("config file: unknown key '" + key + "'");
  }
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    out.push_back(parse_size(key, t));
  }
  if (out.empty()) throw UsageError("config key '" + key + "': empty list");
  return out;
}

std::string timestamp_run_id() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "run_%Y%m%d_%H%M%S", &tm);
  return buf;
}

fs::path make_run_dir(const RunConfig& rc) {
  std::string id = rc.run_id.empty() ? timestamp_run_id() : rc.run_id;
  fs::path dir = fs::path(rc.out) / id;
  if (rc.run_id.empty()) {
    std::size_t n = 2;
    while (fs::exists(dir)) dir = fs::path(rc.out) / (id + "_" + std::to_string(n++));
  }
  fs::create_directories(dir);
  return dir;
}

struct RunLogger {
  std::string path;
  void event(const nlohmann::json& j) const {
    std::ofstream f(path, std::ios::app);
    f << j.dump() << "\n";
  }
};

nlohmann::json resolved_config_json(const std::string& command, const RunConfig& rc) {
  return {{"format", "dsc.runconfig/1"},
          {"command", command},
          {"dataset", rc.dataset},
          {"cache_dir", rc.cache_dir},
          {"cache", rc.cache},
          {"out", rc.out},
          {"run_id", rc.run_id},
          {"run", rc.run},
          {"jobs", rc.resolved_jobs()},
          {"seeding_mode", rc.seeding_mode},
          {"window_step", rc.window_step},
          {"sg_window", rc.sg_window},
          {"sg_order", rc.sg_order},
          {"target_hz", rc.target_hz},
          {"train", train_config_to_json(rc.train)},
          {"deltas", rc.deltas},
          {"dims", rc.dims},
          {"subjects", rc.subjects},
          {"segments", rc.segments},
          {"duration", rc.duration},
          {"noise", rc.noise},
          {"classes", rc.classes}};
}

RunLogger start_run(const std::string& command, const RunConfig& rc, const fs::path& run_dir) {
  const auto j = resolved_config_json(command, rc);
  write_json_file((run_dir / "resolved_config.json").string(), j);
  std::cout << "run directory: " << run_dir.string() << "\n";
  std::cout << "resolved config: " << j.dump() << "\n";
  RunLogger log{(run_dir / "run.log").string()};
  log.event({{"event", "start"}, {"command", command}});
  return log;
}

RegimeSpec class_regime(std::size_t cls) {
  RegimeSpec spec;
  switch (cls) {
    case 0:
      spec.label = "calm";
      spec.eda_baseline = 1.0;
      spec.eda_bump_rate_hz = 0.05;
      spec.eda_bump_height = 0.3;
      spec.bvp_freq_hz = 1.0;
      spec.bvp_amplitude = 0.4;
      spec.temp_baseline = 33.0;
      break;
    case 1:
      spec.label = "stress";
      spec.eda_baseline = 4.0;
      spec.eda_bump_rate_hz = 0.4;
      spec.eda_bump_height = 0.8;
      spec.bvp_freq_hz = 2.2;
      spec.bvp_amplitude = 1.2;
      spec.temp_baseline = 34.5;
      break;
    default:
      spec.label = "amused";
      spec.eda_baseline = 2.5;
      spec.eda_bump_rate_hz = 0.2;
      spec.eda_bump_height = 0.5;
      spec.bvp_freq_hz = 1.6;
      spec.bvp_amplitude = 0.8;
      spec.temp_baseline = 33.8;
      break;
  }
  return spec;
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int cmd_synth(RunConfig rc) {
  if (rc.dataset.empty()) throw UsageError("synth: --dataset is required");
  if (rc.classes < 2 || rc.classes > 3) throw UsageError("synth: --classes must be 2 or 3");
  if (rc.subjects == 0) throw UsageError("synth: --subjects must be positive");
  if (rc.segments < rc.classes) {
    throw UsageError("synth: --segments must cover every class at least once");
  }
  if (rc.duration <= 0.0) throw UsageError("synth: --duration must be positive");

  const fs::path run_dir = make_run_dir(rc);
  RunLogger log = start_run("synth", rc, run_dir);
  fs::create_directories(rc.dataset);

  nlohmann::json manifest_subjects = nlohmann::json::array();
  for (std::size_t s = 0; s < rc.subjects; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "s%02zu", s + 1);
    const std::uint64_t subject_seed = mix_seed(rc.train.rng_seed ^ (s + 1));

    // one jittered parameter set per class keeps a subject self-consistent
    std::mt19937_64 rng(subject_seed);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    std::vector<RegimeSpec> class_specs;
    for (std::size_t c = 0; c < rc.classes; ++c) {
      RegimeSpec spec = class_regime(c);
      spec.duration_s = rc.duration;
      spec.noise_sigma = rc.noise;
      spec.eda_baseline *= 1.0 + jitter(rng);
      spec.bvp_freq_hz *= 1.0 + jitter(rng);
      spec.bvp_amplitude *= 1.0 + jitter(rng);
      spec.temp_baseline += jitter(rng);
      class_specs.push_back(spec);
    }

    std::vector<RegimeSpec> specs;
    for (std::size_t seg = 0; seg < rc.segments; ++seg) {
      specs.push_back(class_specs[seg % rc.classes]);
    }
    SignalSession session = generate(specs, subject_seed);
    session.subject_id = name;
    session.seeding_mode = rc.seeding_mode;
    const fs::path dir = fs::path(rc.dataset) / name;
    write_e4_csv(session, dir.string());

    manifest_subjects.push_back({{"subject", name}, {"seed", subject_seed}});
    log.event({{"event", "subject"}, {"subject", name}, {"directory", dir.string()}});
    std::cout << name << ": " << rc.segments << " segments x " << rc.duration << " s -> "
              << dir.string() << "\n";
  }

  nlohmann::json labels = nlohmann::json::array();
  for (std::size_t c = 0; c < rc.classes; ++c) labels.push_back(class_regime(c).label);
  write_json_file((fs::path(rc.dataset) / "manifest.json").string(),
                  {{"format", "dsc.dataset/1"},
                   {"subjects", manifest_subjects},
                   {"labels", labels},
                   {"segments", rc.segments},
                   {"duration_s", rc.duration},
                   {"noise", rc.noise},
                   {"rng_seed", rc.train.rng_seed}});
  log.event({{"event", "done"}, {"subjects", rc.subjects}});
  return 0;
}

std::vector<fs::path> session_directories(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "labels.csv")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no sessions with labels.csv under " + root);
  return dirs;
}

int cmd_preprocess(RunConfig rc) {
  if (rc.dataset.empty()) throw UsageError("preprocess: --dataset is required");
  if (rc.cache_dir.empty()) rc.cache_dir = (fs::path(rc.dataset) / "cache").string();
  const auto dirs = session_directories(rc.dataset);

  const fs::path run_dir = make_run_dir(rc);
  RunLogger log = start_run("preprocess", rc, run_dir);
  fs::create_directories(rc.cache_dir);

  const PreprocessConfig pre{rc.sg_window, rc.sg_order, rc.target_hz};
  nlohmann::json sessions = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  std::string first_error;
  for (const auto& dir : dirs) {
    const std::string id = dir.filename().string();
    try {
      SignalSession raw = ingest_e4_csv(dir.string());
      raw.seeding_mode = rc.seeding_mode;
      SignalSession prep = preprocess_session(raw, pre);
      WindowSet ws = make_windows(prep, rc.train.delta, rc.window_step);
      write_session_cache((fs::path(rc.cache_dir) / (id + ".session.json")).string(), prep);
      write_window_cache((fs::path(rc.cache_dir) / (id + ".windows.json")).string(), ws);

      std::map<std::string, std::size_t> counts;
      for (int lab : ws.seed_labels) counts[ws.label_names[static_cast<std::size_t>(lab)]]++;
      nlohmann::json entry = {{"subject", id}, {"windows", ws.size()},
                              {"class_window_counts", counts}};
      sessions.push_back(entry);
      log.event({{"event", "session"}, {"subject", id}, {"windows", ws.size()}});
      std::cout << id << ": " << ws.size() << " windows (";
      bool first = true;
      for (const auto& [label, n] : counts) {
        if (!first) std::cout << ", ";
        std::cout << label << "=" << n;
        first = false;
      }
      std::cout << ")\n";
    } catch (const std::exception& e) {
      failures.push_back({{"subject", id}, {"error", e.what()}});
      log.event({{"event", "session_error"}, {"subject", id}, {"error", e.what()}});
      std::cout << id << ": ERROR " << e.what() << "\n";
      if (first_error.empty()) first_error = e.what();
    }
  }

  write_json_file((run_dir / "summary.json").string(),
                  {{"format", "dsc.preprocess/1"},
                   {"cache_dir", rc.cache_dir},
                   {"sessions", sessions},
                   {"failures", failures}});
  log.event({{"event", "done"}, {"cached", sessions.size()}, {"failed", failures.size()}});
  if (sessions.empty()) {
    throw DataError("all " + std::to_string(dirs.size()) +
                    " sessions failed preprocessing; first error: " + first_error);
  }
  return 0;
}

std::vector<fs::path> files_with_suffix(const std::string& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw DataError("cache directory " + dir + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_text_file(const fs::path& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << body;
}

WindowSet windows_for_config(const fs::path& cache_path, const RunConfig& rc) {
  WindowSet ws = read_window_cache(cache_path.string());
  if (ws.delta == rc.train.delta) return ws;
  std::string session_path = cache_path.string();
  const std::string tag = ".windows.json";
  session_path.replace(session_path.size() - tag.size(), tag.size(), ".session.json");
  if (!fs::exists(session_path)) {
    throw DataError("cache " + cache_path.string() + " holds width-" + std::to_string(ws.delta) +
                    " windows but the config wants " + std::to_string(rc.train.delta) +
                    " and session cache " + session_path + " is missing");
  }
  return make_windows(read_session_cache(session_path), rc.train.delta, rc.window_step);
}

int cmd_evaluate(RunConfig rc) {
  if (rc.cache_dir.empty()) throw UsageError("evaluate: --cache_dir is required");
  const auto caches = files_with_suffix(rc.cache_dir, ".windows.json");
  if (caches.empty()) throw DataError("no window caches under " + rc.cache_dir);

  const fs::path run_dir = make_run_dir(rc);
  RunLogger log = start_run("evaluate", rc, run_dir);

  std::vector<EvaluationReport> reports;
  nlohmann::json subjects = nlohmann::json::array();
  double acc_sum = 0.0;
  for (const auto& cache : caches) {
    WindowSet ws = windows_for_config(cache, rc);
    EvaluationReport report =
        run_cv(ws, rc.train, rc.resolved_jobs(), (run_dir / ws.subject_id).string());
    write_json_file((run_dir / (ws.subject_id + "_report.json")).string(),
                    report_to_json(report));
    if (report.completed_folds > 0) {
      write_text_file(run_dir / (ws.subject_id + "_confusion.csv"),
                      confusion_csv(report.pooled_confusion, report.label_names));
    }
    std::cout << ws.subject_id << ": mean test accuracy " << report.mean_test_accuracy << " over "
              << report.completed_folds << "/" << report.fold_count << " folds\n";
    log.event({{"event", "subject"},
               {"subject", ws.subject_id},
               {"mean_test_accuracy", report.mean_test_accuracy},
               {"completed_folds", report.completed_folds}});
    subjects.push_back({{"subject", ws.subject_id},
                        {"mean_test_accuracy", report.mean_test_accuracy},
                        {"completed_folds", report.completed_folds}});
    acc_sum += report.mean_test_accuracy;
    reports.push_back(std::move(report));
  }

  const double aggregate = acc_sum / static_cast<double>(reports.size());
  write_text_file(run_dir / "metrics_table.csv", metrics_table_csv(reports));
  write_text_file(run_dir / "boxplot.csv", boxplot_csv(reports));
  write_json_file((run_dir / "aggregate.json").string(),
                  {{"format", "dsc.aggregate/1"},
                   {"subjects", subjects},
                   {"mean_test_accuracy", aggregate}});
  std::cout << "aggregate mean test accuracy: " << aggregate << "\n";
  log.event({{"event", "done"}, {"mean_test_accuracy", aggregate}});
  return 0;
}

int cmd_train(RunConfig rc) {
  if (rc.cache.empty()) throw UsageError("train: --cache is required");
  WindowSet ws = read_window_cache(rc.cache);
  rc.train.delta = ws.delta;  // the cache fixes the window width

  const fs::path run_dir = make_run_dir(rc);
  RunLogger log = start_run("train", rc, run_dir);

  // trains on every cached window unless a downsample factor is given
  const std::size_t step = rc.train.downsample_factor == 0 ? 1 : rc.train.downsample_factor;
  std::vector<std::size_t> ids;
  std::vector<int> seeds;
  for (std::size_t i = 0; i < ws.size(); i += step) {
    ids.push_back(i);
    seeds.push_back(ws.seed_labels[i]);
  }

  auto model = make_autoencoder(rc.train.embedding_dim, rc.train.rng_seed);
  TrainedModel tm = train(model, ws, ids, seeds, rc.train);
  write_checkpoint((run_dir / "checkpoint.json").string(), tm);
  write_run_log((run_dir / "run_log.jsonl").string(), tm);

  const EpochLoss last = tm.history.back();
  std::cout << "trained on " << ids.size() << " windows; final loss " << last.total
            << " (reconstruction " << last.ae << ", clustering " << last.cm << ")\n";
  log.event({{"event", "done"},
             {"windows", ids.size()},
             {"loss", last.total},
             {"checkpoint", (run_dir / "checkpoint.json").string()}});
  return 0;
}

int cmd_sweep(RunConfig rc) {
  if (rc.cache_dir.empty()) throw UsageError("sweep: --cache_dir is required");
  const auto deltas = parse_list("deltas", rc.deltas);
  const auto dims = parse_list("dims", rc.dims);
  const auto sessions = files_with_suffix(rc.cache_dir, ".session.json");
  if (sessions.empty()) throw DataError("no session caches under " + rc.cache_dir);

  const fs::path run_dir = make_run_dir(rc);
  RunLogger log = start_run("sweep", rc, run_dir);

  std::vector<std::pair<std::string, SweepResult>> per_subject;
  for (const auto& path : sessions) {
    SignalSession prep = read_session_cache(path.string());
    SweepResult res =
        sensitivity_sweep(prep, rc.train, deltas, dims, rc.window_step, rc.resolved_jobs());

    nlohmann::json entries = nlohmann::json::array();
    for (const auto& entry : res.entries) {
      nlohmann::json e = {{"axis", entry.axis}, {"value", entry.value},
                          {"skipped", entry.skipped}};
      if (entry.skipped) {
        e["note"] = entry.note;
      } else {
        e["mean_test_accuracy"] = entry.report.mean_test_accuracy;
        e["report"] = report_to_json(entry.report);
      }
      entries.push_back(e);
    }
    write_json_file((run_dir / (prep.subject_id + "_sweep.json")).string(),
                    {{"format", "dsc.sweep/1"},
                     {"subject", prep.subject_id},
                     {"fixed_setting_accuracy", res.fixed_setting_accuracy},
                     {"best_accuracy", res.best_accuracy},
                     {"best_axis", res.best_axis},
                     {"best_value", res.best_value},
                     {"entries", entries}});
    std::cout << prep.subject_id << ": best " << res.best_axis << "=" << res.best_value
              << " at accuracy " << res.best_accuracy << "\n";
    log.event({{"event", "subject"},
               {"subject", prep.subject_id},
               {"best_axis", res.best_axis},
               {"best_value", res.best_value},
               {"best_accuracy", res.best_accuracy}});
    per_subject.emplace_back(prep.subject_id, std::move(res));
  }

  write_text_file(run_dir / "sweep_delta.csv", sweep_axis_csv(per_subject, "delta"));
  write_text_file(run_dir / "sweep_dim.csv", sweep_axis_csv(per_subject, "dim"));
  log.event({{"event", "done"}, {"subjects", per_subject.size()}});
  return 0;
}

int cmd_report(RunConfig rc) {
  if (rc.run.empty()) throw UsageError("report: --run is required");
  if (!fs::is_directory(rc.run)) throw DataError("run directory " + rc.run + " does not exist");
  const auto files = files_with_suffix(rc.run, "_report.json");
  if (files.empty()) throw DataError("no report files under " + rc.run);

  const fs::path run_dir = make_run_dir(rc);
  RunLogger log = start_run("report", rc, run_dir);

  std::vector<EvaluationReport> reports;
  nlohmann::json subjects = nlohmann::json::array();
  double acc_sum = 0.0;
  for (const auto& path : files) {
    EvaluationReport report = report_from_json(read_json_file(path.string()));
    if (report.completed_folds > 0) {
      write_text_file(run_dir / (report.subject_id + "_confusion.csv"),
                      confusion_csv(report.pooled_confusion, report.label_names));
    }
    subjects.push_back({{"subject", report.subject_id},
                        {"mean_test_accuracy", report.mean_test_accuracy},
                        {"completed_folds", report.completed_folds}});
    acc_sum += report.mean_test_accuracy;
    log.event({{"event", "subject"}, {"subject", report.subject_id}});
    reports.push_back(std::move(report));
  }

  write_text_file(run_dir / "metrics_table.csv", metrics_table_csv(reports));
  write_text_file(run_dir / "boxplot.csv", boxplot_csv(reports));
  write_json_file((run_dir / "aggregate.json").string(),
                  {{"format", "dsc.aggregate/1"},
                   {"subjects", subjects},
                   {"mean_test_accuracy", acc_sum / static_cast<double>(reports.size())}});
  std::cout << "re-emitted tables for " << reports.size() << " report(s) into "
            << run_dir.string() << "\n";
  log.event({{"event", "done"}, {"reports", reports.size()}});
  return 0;
}

int run_cli(int argc, char** argv) {
  // config file values fill in before flag parsing, so flags always win
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
  }

  RunConfig rc;
  if (!config_path.empty()) apply_key_values(rc, load_key_values(config_path));

  CLI::App app{"Deep-seeded clustering for wearable physiological signals"};
  app.require_subcommand(1);
  std::string config_echo = config_path;
  app.add_option("--config", config_echo, "key = value file; flags override its entries");
  app.add_option("--dataset", rc.dataset, "dataset root directory");
  app.add_option("--cache_dir", rc.cache_dir, "window/session cache directory");
  app.add_option("--cache", rc.cache, "single window cache file (train)");
  app.add_option("--out", rc.out, "output root for run directories");
  app.add_option("--run_id", rc.run_id, "run directory name (default: timestamp)");
  app.add_option("--run", rc.run, "existing evaluate run directory (report)");
  app.add_option("--jobs", rc.jobs, "parallel fold workers (0 = available cores)");
  app.add_option("--seeding_mode", rc.seeding_mode, "seed label provenance tag");
  app.add_option("--window_step", rc.window_step, "stride between window starts");
  app.add_option("--sg_window", rc.sg_window, "smoothing window length (odd)");
  app.add_option("--sg_order", rc.sg_order, "smoothing polynomial order");
  app.add_option("--target_hz", rc.target_hz, "common sample rate after upsampling");
  app.add_option("--delta", rc.train.delta, "window width in samples");
  app.add_option("--embedding_dim", rc.train.embedding_dim, "embedding dimension");
  app.add_option("--epochs", rc.train.epochs, "joint training epochs");
  app.add_option("--gamma", rc.train.gamma, "membership softness");
  app.add_option("--lr_train", rc.train.lr_train, "joint phase learning rate");
  app.add_option("--lr_pretrain", rc.train.lr_pretrain, "pretrain learning rate");
  app.add_option("--pretrain_epochs", rc.train.pretrain_epochs, "reconstruction-only epochs");
  app.add_option("--batch_size", rc.train.batch_size, "windows per gradient step");
  app.add_option("--rng_seed", rc.train.rng_seed, "seed for all derived randomness");
  app.add_option("--optimizer", rc.train.optimizer, "adam | sgd");
  app.add_option("--split_mode", rc.train.split_mode, "sequential | non-sequential");
  app.add_option("--downsample_factor", rc.train.downsample_factor,
                 "training-set thinning (0 = split-mode default)");
  app.add_option("--deltas", rc.deltas, "sweep window widths, comma separated");
  app.add_option("--dims", rc.dims, "sweep embedding dims, comma separated");
  app.add_option("--subjects", rc.subjects, "synthetic subjects to generate");
  app.add_option("--segments", rc.segments, "labeled segments per synthetic session");
  app.add_option("--duration", rc.duration, "seconds per synthetic segment");
  app.add_option("--noise", rc.noise, "synthetic noise sigma");
  app.add_option("--classes", rc.classes, "synthetic class count (2 or 3)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic wearable dataset");
  auto* preprocess = app.add_subcommand("preprocess", "ingest sessions and cache windows");
  auto* train_cmd = app.add_subcommand("train", "train one model from a window cache");
  auto* evaluate = app.add_subcommand("evaluate", "10-fold cross-validation per subject");
  auto* sweep = app.add_subcommand("sweep", "window width and embedding dim sensitivity");
  auto* report = app.add_subcommand("report", "re-emit tables from stored reports");
  for (auto* sub : {synth, preprocess, train_cmd, evaluate, sweep, report}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (synth->parsed()) return cmd_synth(rc);
  if (preprocess->parsed()) return cmd_preprocess(rc);
  if (train_cmd->parsed()) return cmd_train(rc);
  if (evaluate->parsed()) return cmd_evaluate(rc);
  if (sweep->parsed()) return cmd_sweep(rc);
  return cmd_report(rc);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
}
