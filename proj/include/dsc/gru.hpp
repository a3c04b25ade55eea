#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/signal.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

// Gate matrices are (hidden, input) or (hidden, hidden); rows of a batch are
// multiplied against their transpose.
struct GruLayerParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  TensorPtr wu, uu, bu;  // update gate
  TensorPtr wr, ur, br;  // reset gate
  TensorPtr wc, uc, bc;  // candidate state

  std::vector<TensorPtr> parameters() const { return {wu, uu, bu, wr, ur, br, wc, uc, bc}; }
};

struct LayerNormParams {
  TensorPtr gain;  // 1 x hidden
  TensorPtr bias;  // 1 x hidden
  double eps = 1e-5;

  std::vector<TensorPtr> parameters() const { return {gain, bias}; }
};

struct AutoencoderModel {
  std::size_t embedding_dim = 0;
  GruLayerParams enc1, enc2, dec1, dec2;
  LayerNormParams enc1_norm, enc2_norm, dec1_norm, dec2_norm;
  TensorPtr out_w;  // 3 x embedding_dim
  TensorPtr out_b;  // 1 x 3

  std::vector<TensorPtr> parameters() const;
};

inline constexpr std::size_t kNumChannels = 3;

AutoencoderModel make_autoencoder(std::size_t embedding_dim, std::uint64_t rng_seed);

// Independent copy: fresh parameter tensors with the same values, so updates
// to the clone never touch the source.
AutoencoderModel clone_model(const AutoencoderModel& m);

// One batched GRU step: x is B x input, h_prev is B x hidden.
TensorPtr gru_step_batch(Tape& tp, const GruLayerParams& p, const TensorPtr& x,
                         const TensorPtr& h_prev);

// Single-vector step (x: input values, h_prev: hidden values).
std::vector<double> gru_step(const GruLayerParams& p, const std::vector<double>& x,
                             const std::vector<double>& h_prev);

TensorPtr layer_norm(Tape& tp, const LayerNormParams& p, const TensorPtr& x);

// Runs the 2-layer encoder over the windows' delta timesteps; returns the
// normalized final hidden state, B x D.
TensorPtr encode_batch(Tape& tp, const AutoencoderModel& m, const WindowSet& ws,
                       const std::vector<std::size_t>& window_ids);

// Decoder consumes z at every timestep from a zero initial hidden state and
// maps each step through the linear output layer; steps_out receives the
// B x 3 reconstruction per timestep.
void decode_batch(Tape& tp, const AutoencoderModel& m, const TensorPtr& z, std::size_t delta,
                  std::vector<TensorPtr>& steps_out);

// L_AE = (1/2) (1/B) sum_windows ||x - xhat||^2, as a tape scalar.
TensorPtr reconstruction_loss_batch(Tape& tp, const AutoencoderModel& m, const WindowSet& ws,
                                    const std::vector<std::size_t>& window_ids, TensorPtr* z_out);

// Convenience single-window entry points (no gradients retained).
std::vector<double> encode(const AutoencoderModel& m, const Mat& window);
Mat decode(const AutoencoderModel& m, const std::vector<double>& z, std::size_t delta);
double reconstruction_loss(const AutoencoderModel& m, const WindowSet& ws,
                           const std::vector<std::size_t>& window_ids);

// Embeddings for many windows, computed in bounded-size chunks.
Mat embed_all(const AutoencoderModel& m, const WindowSet& ws,
              const std::vector<std::size_t>& window_ids);

inline constexpr const char* kCheckpointFormatTag = "dsc.checkpoint/1";
nlohmann::json model_to_json(const AutoencoderModel& m);
AutoencoderModel model_from_json(const nlohmann::json& j);

}  // namespace dsc
