#include "dsc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "dsc/errors.hpp"
#include "dsc/serialize.hpp"

namespace dsc {

namespace {

class Optimizer {
 public:
  Optimizer(std::vector<TensorPtr> params, const std::string& kind, double lr)
      : params_(std::move(params)), adam_(kind == "adam"), lr_(lr) {
    if (kind != "adam" && kind != "sgd") {
      throw DataError("optimizer: unknown kind '" + kind + "'");
    }
    for (auto& p : params_) p->ensure_grad();
    if (adam_) {
      for (const auto& p : params_) {
        m_.emplace_back(p->v.rows, p->v.cols);
        s_.emplace_back(p->v.rows, p->v.cols);
      }
    }
  }

  // Applies one update from the accumulated gradients, then clears them.
  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Mat& v = params_[i]->v;
      Mat& g = params_[i]->g;
      if (adam_) {
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t j = 0; j < v.size(); ++j) {
          m_[i].d[j] = kBeta1 * m_[i].d[j] + (1.0 - kBeta1) * g.d[j];
          s_[i].d[j] = kBeta2 * s_[i].d[j] + (1.0 - kBeta2) * g.d[j] * g.d[j];
          const double mhat = m_[i].d[j] / c1;
          const double shat = s_[i].d[j] / c2;
          v.d[j] -= lr_ * mhat / (std::sqrt(shat) + kEps);
        }
      } else {
        for (std::size_t j = 0; j < v.size(); ++j) v.d[j] -= lr_ * g.d[j];
      }
    }
    for (auto& p : params_) p->zero_grad();
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<TensorPtr> params_;
  bool adam_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<Mat> m_, s_;
};

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void check_finite(double loss, const char* phase, std::size_t epoch, std::size_t batch) {
  if (std::isfinite(loss)) return;
  throw NumericalError(std::string(phase) + ": non-finite loss at epoch " +
                       std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1));
}

std::vector<EpochLoss> pretrain_impl(AutoencoderModel& model, const WindowSet& ws,
                                     const std::vector<std::size_t>& window_ids,
                                     const TrainConfig& cfg, std::mt19937_64& rng) {
  std::vector<EpochLoss> history;
  if (cfg.pretrain_epochs == 0) return history;
  Optimizer opt(model.parameters(), cfg.optimizer, cfg.lr_pretrain);
  const std::size_t n = window_ids.size();
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    auto batches = make_batches(n, cfg.batch_size, rng);
    double ae_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<std::size_t> ids;
      ids.reserve(batches[b].size());
      for (auto pos : batches[b]) ids.push_back(window_ids[pos]);
      Tape tape;
      TensorPtr loss = reconstruction_loss_batch(tape, model, ws, ids, nullptr);
      check_finite(loss->v.d[0], "pretrain", epoch, b);
      tape.backward(loss);
      opt.step();
      ae_sum += loss->v.d[0] * static_cast<double>(ids.size());
    }
    EpochLoss entry;
    entry.ae = ae_sum / static_cast<double>(n);
    entry.total = entry.ae;
    history.push_back(entry);
  }
  return history;
}

Mat gather_rows(const Mat& src, const std::vector<std::size_t>& rows) {
  Mat out(rows.size(), src.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < src.cols; ++j) out.at(i, j) = src.at(rows[i], j);
  }
  return out;
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
  if (cfg.delta == 0) throw DataError("config: delta must be positive");
  if (cfg.embedding_dim == 0) throw DataError("config: embedding_dim must be positive");
  if (cfg.gamma <= 0.0) throw DataError("config: gamma must be positive");
  if (cfg.batch_size == 0) throw DataError("config: batch_size must be positive");
  if (cfg.lr_train < 0.0 || cfg.lr_pretrain < 0.0) {
    throw DataError("config: learning rates must be non-negative");
  }
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd") {
    throw DataError("config: optimizer must be adam or sgd, got '" + cfg.optimizer + "'");
  }
  if (cfg.split_mode != "sequential" && cfg.split_mode != "non-sequential") {
    throw DataError("config: split_mode must be sequential or non-sequential, got '" +
                    cfg.split_mode + "'");
  }
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"delta", cfg.delta},
          {"embedding_dim", cfg.embedding_dim},
          {"epochs", cfg.epochs},
          {"gamma", cfg.gamma},
          {"lr_train", cfg.lr_train},
          {"lr_pretrain", cfg.lr_pretrain},
          {"pretrain_epochs", cfg.pretrain_epochs},
          {"batch_size", cfg.batch_size},
          {"rng_seed", cfg.rng_seed},
          {"optimizer", cfg.optimizer},
          {"split_mode", cfg.split_mode},
          {"downsample_factor", cfg.downsample_factor}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.delta = j.value("delta", cfg.delta);
  cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.lr_train = j.value("lr_train", cfg.lr_train);
  cfg.lr_pretrain = j.value("lr_pretrain", cfg.lr_pretrain);
  cfg.pretrain_epochs = j.value("pretrain_epochs", cfg.pretrain_epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  cfg.optimizer = j.value("optimizer", cfg.optimizer);
  cfg.split_mode = j.value("split_mode", cfg.split_mode);
  cfg.downsample_factor = j.value("downsample_factor", cfg.downsample_factor);
  validate_config(cfg);
  return cfg;
}

std::string config_fingerprint(const TrainConfig& cfg) {
  return fingerprint(train_config_to_json(cfg));
}

std::vector<EpochLoss> pretrain(AutoencoderModel& model, const WindowSet& ws,
                                const std::vector<std::size_t>& window_ids,
                                const TrainConfig& cfg) {
  validate_config(cfg);
  if (window_ids.empty()) throw DataError("pretrain: no training windows");
  std::mt19937_64 rng(cfg.rng_seed);
  return pretrain_impl(model, ws, window_ids, cfg, rng);
}

TrainedModel train(const AutoencoderModel& init, const WindowSet& ws,
                   const std::vector<std::size_t>& window_ids, const std::vector<int>& seeds,
                   const TrainConfig& cfg) {
  validate_config(cfg);
  if (window_ids.empty()) throw DataError("train: no training windows");
  if (seeds.size() != window_ids.size()) {
    throw DataError("train: " + std::to_string(seeds.size()) + " seeds for " +
                    std::to_string(window_ids.size()) + " windows");
  }
  if (ws.delta != cfg.delta) {
    throw DataError("train: windows have delta " + std::to_string(ws.delta) +
                    ", config expects " + std::to_string(cfg.delta));
  }
  const std::size_t k = std::set<int>(seeds.begin(), seeds.end()).size();
  AutoencoderModel model = clone_model(init);

  std::mt19937_64 rng(cfg.rng_seed);
  TrainedModel tm;
  tm.history = pretrain_impl(model, ws, window_ids, cfg, rng);
  tm.config = cfg;
  tm.fingerprint = config_fingerprint(cfg);

  Mat embeddings = embed_all(model, ws, window_ids);
  ClusterState cs = seed(seeds, k, embeddings, cfg.gamma);

  Optimizer opt(model.parameters(), cfg.optimizer, cfg.lr_train);
  const std::size_t n = window_ids.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(n, cfg.batch_size, rng);
    double ae_sum = 0.0;
    double cm_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<std::size_t> ids;
      ids.reserve(batches[b].size());
      for (auto pos : batches[b]) ids.push_back(window_ids[pos]);
      Mat u_batch = gather_rows(cs.memberships, batches[b]);
      Tape tape;
      TensorPtr z = nullptr;
      TensorPtr l_ae = reconstruction_loss_batch(tape, model, ws, ids, &z);
      TensorPtr l_cm = tape.cluster_quadratic(z, u_batch, cs.centroids);
      TensorPtr loss = tape.add(l_ae, l_cm);
      check_finite(loss->v.d[0], "train", epoch, b);
      tape.backward(loss);
      opt.step();
      ae_sum += l_ae->v.d[0] * static_cast<double>(ids.size());
      cm_sum += l_cm->v.d[0] * static_cast<double>(ids.size());
    }
    EpochLoss entry;
    entry.ae = ae_sum / static_cast<double>(n);
    entry.cm = cm_sum / static_cast<double>(n);
    entry.total = entry.ae + entry.cm;
    tm.history.push_back(entry);

    embeddings = embed_all(model, ws, window_ids);
    Mat u = cmeans_membership(embeddings, cs.centroids, cfg.gamma);
    cs.centroids = cmeans_centroids(embeddings, u, cs.centroids);
    cs.memberships = u;
  }

  tm.model = std::move(model);
  tm.clusters = std::move(cs);
  return tm;
}

Prediction predict(const TrainedModel& tm, const WindowSet& ws,
                   const std::vector<std::size_t>& window_ids) {
  if (ws.delta != tm.config.delta) {
    throw DataError("predict: windows have delta " + std::to_string(ws.delta) +
                    ", model was trained with " + std::to_string(tm.config.delta));
  }
  Mat z = embed_all(tm.model, ws, window_ids);
  Prediction out;
  out.memberships = cmeans_membership(z, tm.clusters.centroids, tm.clusters.gamma);
  out.classes.resize(window_ids.size());
  for (std::size_t t = 0; t < window_ids.size(); ++t) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < tm.clusters.k; ++c) {
      if (out.memberships.at(t, c) > out.memberships.at(t, arg)) arg = c;
    }
    out.classes[t] = tm.clusters.pseudo_labels[arg];
  }
  return out;
}

void write_run_log(const std::string& path, const TrainedModel& tm) {
  std::ofstream f(path);
  if (!f) throw DataError("run log: cannot open " + path);
  for (std::size_t i = 0; i < tm.history.size(); ++i) {
    const bool pre = i < tm.config.pretrain_epochs;
    nlohmann::json line = {{"epoch", i + 1},
                           {"phase", pre ? "pretrain" : "train"},
                           {"loss_ae", tm.history[i].ae},
                           {"loss_cm", tm.history[i].cm},
                           {"loss", tm.history[i].total},
                           {"config", tm.fingerprint}};
    f << line.dump() << "\n";
  }
}

void write_checkpoint(const std::string& path, const TrainedModel& tm) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : tm.history) {
    history.push_back({{"ae", h.ae}, {"cm", h.cm}, {"total", h.total}});
  }
  nlohmann::json j{{"format", kTrainedModelFormatTag},
                   {"model", model_to_json(tm.model)},
                   {"clusters", cluster_state_to_json(tm.clusters)},
                   {"history", history},
                   {"config", train_config_to_json(tm.config)},
                   {"fingerprint", tm.fingerprint}};
  write_json_file(path, j);
}

TrainedModel read_checkpoint(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.contains("format") || j["format"] != kTrainedModelFormatTag) {
    throw DataError("checkpoint " + path + ": missing or unsupported format tag");
  }
  TrainedModel tm;
  tm.model = model_from_json(j.at("model"));
  tm.clusters = cluster_state_from_json(j.at("clusters"));
  for (const auto& h : j.at("history")) {
    tm.history.push_back(EpochLoss{h.at("ae").get<double>(), h.at("cm").get<double>(),
                                   h.at("total").get<double>()});
  }
  tm.config = train_config_from_json(j.at("config"));
  tm.fingerprint = j.at("fingerprint").get<std::string>();
  return tm;
}

}  // namespace dsc
