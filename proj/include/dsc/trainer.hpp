#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/clustering.hpp"
#include "dsc/gru.hpp"
#include "dsc/signal.hpp"

namespace dsc {

struct TrainConfig {
  std::size_t delta = 600;
  std::size_t embedding_dim = 30;
  std::size_t epochs = 100;
  double gamma = 0.1;
  double lr_train = 5e-5;
  double lr_pretrain = 1e-6;
  std::size_t pretrain_epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t rng_seed = 1;
  std::string optimizer = "adam";  // adam | sgd
  std::string split_mode = "non-sequential";
  std::size_t downsample_factor = 0;  // 0 resolves by split mode

  std::size_t resolved_downsample() const {
    if (downsample_factor != 0) return downsample_factor;
    return split_mode == "sequential" ? 10 : 2000;
  }
};

void validate_config(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
std::string config_fingerprint(const TrainConfig& cfg);

struct EpochLoss {
  double ae = 0.0;
  double cm = 0.0;
  double total = 0.0;
};

struct TrainedModel {
  AutoencoderModel model;
  ClusterState clusters;
  std::vector<EpochLoss> history;  // pretrain_epochs + epochs entries
  TrainConfig config;
  std::string fingerprint;
};

// Gradient descent on the reconstruction loss only; returns one loss entry
// per pretraining epoch.
std::vector<EpochLoss> pretrain(AutoencoderModel& model, const WindowSet& ws,
                                const std::vector<std::size_t>& window_ids,
                                const TrainConfig& cfg);

// Pretrains, seeds clusters from embeddings, then minimizes L_AE + L_cm with
// memberships and centroids held constant inside each gradient step and
// refreshed from the full training set after every epoch. Works on a clone;
// the passed model is untouched.
TrainedModel train(const AutoencoderModel& init, const WindowSet& ws,
                   const std::vector<std::size_t>& window_ids, const std::vector<int>& seeds,
                   const TrainConfig& cfg);

struct Prediction {
  std::vector<int> classes;
  Mat memberships;  // rows sum to 1
};

Prediction predict(const TrainedModel& tm, const WindowSet& ws,
                   const std::vector<std::size_t>& window_ids);

void write_run_log(const std::string& path, const TrainedModel& tm);

inline constexpr const char* kTrainedModelFormatTag = "dsc.trained/1";
void write_checkpoint(const std::string& path, const TrainedModel& tm);
TrainedModel read_checkpoint(const std::string& path);

}  // namespace dsc
