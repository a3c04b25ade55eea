#include "dsc/gru.hpp"

#include <cmath>
#include <random>

#include "dsc/errors.hpp"
#include "dsc/serialize.hpp"

namespace dsc {

namespace {

TensorPtr init_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                      std::size_t fan_in, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (double& v : m.d) v = dist(rng);
  return make_tensor(std::move(m), true, name);
}

GruLayerParams make_layer(std::mt19937_64& rng, std::size_t input, std::size_t hidden,
                          const std::string& prefix) {
  GruLayerParams p;
  p.input_size = input;
  p.hidden_size = hidden;
  p.wu = init_matrix(rng, hidden, input, input, prefix + ".wu");
  p.uu = init_matrix(rng, hidden, hidden, hidden, prefix + ".uu");
  p.bu = make_tensor(Mat(1, hidden), true, prefix + ".bu");
  p.wr = init_matrix(rng, hidden, input, input, prefix + ".wr");
  p.ur = init_matrix(rng, hidden, hidden, hidden, prefix + ".ur");
  p.br = make_tensor(Mat(1, hidden), true, prefix + ".br");
  p.wc = init_matrix(rng, hidden, input, input, prefix + ".wc");
  p.uc = init_matrix(rng, hidden, hidden, hidden, prefix + ".uc");
  p.bc = make_tensor(Mat(1, hidden), true, prefix + ".bc");
  return p;
}

LayerNormParams make_norm(std::size_t hidden, const std::string& prefix) {
  LayerNormParams p;
  p.gain = make_tensor(Mat(1, hidden, 1.0), true, prefix + ".gain");
  p.bias = make_tensor(Mat(1, hidden), true, prefix + ".bias");
  return p;
}

}  // namespace

std::vector<TensorPtr> AutoencoderModel::parameters() const {
  std::vector<TensorPtr> out;
  for (const auto* layer : {&enc1, &enc2, &dec1, &dec2}) {
    auto p = layer->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (const auto* norm : {&enc1_norm, &enc2_norm, &dec1_norm, &dec2_norm}) {
    auto p = norm->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  out.push_back(out_w);
  out.push_back(out_b);
  return out;
}

AutoencoderModel make_autoencoder(std::size_t embedding_dim, std::uint64_t rng_seed) {
  if (embedding_dim == 0) throw DataError("make_autoencoder: embedding_dim must be positive");
  std::mt19937_64 rng(rng_seed);
  AutoencoderModel m;
  m.embedding_dim = embedding_dim;
  m.enc1 = make_layer(rng, kNumChannels, embedding_dim, "enc1");
  m.enc2 = make_layer(rng, embedding_dim, embedding_dim, "enc2");
  m.dec1 = make_layer(rng, embedding_dim, embedding_dim, "dec1");
  m.dec2 = make_layer(rng, embedding_dim, embedding_dim, "dec2");
  m.enc1_norm = make_norm(embedding_dim, "enc1.norm");
  m.enc2_norm = make_norm(embedding_dim, "enc2.norm");
  m.dec1_norm = make_norm(embedding_dim, "dec1.norm");
  m.dec2_norm = make_norm(embedding_dim, "dec2.norm");
  m.out_w = init_matrix(rng, kNumChannels, embedding_dim, embedding_dim, "out.w");
  m.out_b = make_tensor(Mat(1, kNumChannels), true, "out.b");
  return m;
}

AutoencoderModel clone_model(const AutoencoderModel& m) {
  AutoencoderModel out = m;
  auto copy = [](TensorPtr& p) { p = make_tensor(Mat(p->v), p->requires_grad, p->name); };
  for (auto* layer : {&out.enc1, &out.enc2, &out.dec1, &out.dec2}) {
    for (auto* p : {&layer->wu, &layer->uu, &layer->bu, &layer->wr, &layer->ur, &layer->br,
                    &layer->wc, &layer->uc, &layer->bc}) {
      copy(*p);
    }
  }
  for (auto* norm : {&out.enc1_norm, &out.enc2_norm, &out.dec1_norm, &out.dec2_norm}) {
    copy(norm->gain);
    copy(norm->bias);
  }
  copy(out.out_w);
  copy(out.out_b);
  return out;
}

TensorPtr gru_step_batch(Tape& tp, const GruLayerParams& p, const TensorPtr& x,
                         const TensorPtr& h_prev) {
  if (x->cols() != p.input_size || h_prev->cols() != p.hidden_size ||
      x->rows() != h_prev->rows()) {
    throw DataError("gru_step: input " + std::to_string(x->rows()) + "x" +
                    std::to_string(x->cols()) + " and hidden " + std::to_string(h_prev->rows()) +
                    "x" + std::to_string(h_prev->cols()) + " do not fit layer (" +
                    std::to_string(p.input_size) + " -> " + std::to_string(p.hidden_size) + ")");
  }
  auto u = tp.sigmoid(tp.add_row(tp.add(tp.matmul_nt(x, p.wu), tp.matmul_nt(h_prev, p.uu)), p.bu));
  auto r = tp.sigmoid(tp.add_row(tp.add(tp.matmul_nt(x, p.wr), tp.matmul_nt(h_prev, p.ur)), p.br));
  auto cand = tp.tanh(tp.add_row(
      tp.add(tp.matmul_nt(x, p.wc), tp.matmul_nt(tp.mul(r, h_prev), p.uc)), p.bc));
  // (1-u) h + u c == h + u (c - h)
  return tp.add(h_prev, tp.mul(u, tp.sub(cand, h_prev)));
}

std::vector<double> gru_step(const GruLayerParams& p, const std::vector<double>& x,
                             const std::vector<double>& h_prev) {
  Mat xm(1, x.size());
  xm.d = x;
  Mat hm(1, h_prev.size());
  hm.d = h_prev;
  Tape tp;
  auto h = gru_step_batch(tp, p, make_tensor(std::move(xm)), make_tensor(std::move(hm)));
  return h->v.d;
}

TensorPtr layer_norm(Tape& tp, const LayerNormParams& p, const TensorPtr& x) {
  return tp.add_row(tp.mul_row(tp.row_standardize(x, p.eps), p.gain), p.bias);
}

TensorPtr encode_batch(Tape& tp, const AutoencoderModel& m, const WindowSet& ws,
                       const std::vector<std::size_t>& window_ids) {
  if (window_ids.empty()) throw DataError("encode: empty batch");
  const std::size_t b = window_ids.size();
  const std::size_t d = m.embedding_dim;
  auto h1 = make_tensor(Mat(b, d));
  auto h2 = make_tensor(Mat(b, d));
  for (std::size_t t = 0; t < ws.delta; ++t) {
    auto x = make_tensor(ws.gather_timestep(window_ids, t));
    h1 = gru_step_batch(tp, m.enc1, x, h1);
    auto n1 = layer_norm(tp, m.enc1_norm, h1);
    h2 = gru_step_batch(tp, m.enc2, n1, h2);
  }
  return layer_norm(tp, m.enc2_norm, h2);
}

void decode_batch(Tape& tp, const AutoencoderModel& m, const TensorPtr& z, std::size_t delta,
                  std::vector<TensorPtr>& steps_out) {
  if (z->cols() != m.embedding_dim) {
    throw DataError("decode: z has " + std::to_string(z->cols()) + " dims, model expects " +
                    std::to_string(m.embedding_dim));
  }
  const std::size_t b = z->rows();
  auto h1 = make_tensor(Mat(b, m.embedding_dim));
  auto h2 = make_tensor(Mat(b, m.embedding_dim));
  steps_out.clear();
  steps_out.reserve(delta);
  for (std::size_t t = 0; t < delta; ++t) {
    h1 = gru_step_batch(tp, m.dec1, z, h1);
    auto n1 = layer_norm(tp, m.dec1_norm, h1);
    h2 = gru_step_batch(tp, m.dec2, n1, h2);
    auto n2 = layer_norm(tp, m.dec2_norm, h2);
    steps_out.push_back(tp.add_row(tp.matmul_nt(n2, m.out_w), m.out_b));
  }
}

TensorPtr reconstruction_loss_batch(Tape& tp, const AutoencoderModel& m, const WindowSet& ws,
                                    const std::vector<std::size_t>& window_ids, TensorPtr* z_out) {
  auto z = encode_batch(tp, m, ws, window_ids);
  std::vector<TensorPtr> steps;
  decode_batch(tp, m, z, ws.delta, steps);
  TensorPtr total;
  for (std::size_t t = 0; t < ws.delta; ++t) {
    auto x = make_tensor(ws.gather_timestep(window_ids, t));
    auto term = tp.squared_norm(tp.sub(x, steps[t]));
    total = total ? tp.add(total, term) : term;
  }
  if (z_out) *z_out = z;
  return tp.scalar_mul(total, 0.5 / static_cast<double>(window_ids.size()));
}

namespace {

WindowSet single_window_set(const Mat& window) {
  if (window.cols != kNumChannels) {
    throw DataError("encode: window must have 3 channels, got " + std::to_string(window.cols));
  }
  if (window.rows == 0) throw DataError("encode: empty window");
  for (double v : window.d) {
    if (!std::isfinite(v)) throw DataError("encode: non-finite value in window");
  }
  WindowSet ws;
  ws.channel_data = window;
  ws.delta = window.rows;
  ws.seed_labels = {0};
  ws.window_start_indices = {0};
  ws.label_names = {"_"};
  return ws;
}

}  // namespace

std::vector<double> encode(const AutoencoderModel& m, const Mat& window) {
  WindowSet ws = single_window_set(window);
  Tape tp;
  auto z = encode_batch(tp, m, ws, {0});
  return z->v.d;
}

Mat decode(const AutoencoderModel& m, const std::vector<double>& z, std::size_t delta) {
  if (delta == 0) throw DataError("decode: delta must be positive");
  Mat zm(1, z.size());
  zm.d = z;
  Tape tp;
  std::vector<TensorPtr> steps;
  decode_batch(tp, m, make_tensor(std::move(zm)), delta, steps);
  Mat out(delta, kNumChannels);
  for (std::size_t t = 0; t < delta; ++t) {
    for (std::size_t j = 0; j < kNumChannels; ++j) out.at(t, j) = steps[t]->v.at(0, j);
  }
  return out;
}

double reconstruction_loss(const AutoencoderModel& m, const WindowSet& ws,
                           const std::vector<std::size_t>& window_ids) {
  if (window_ids.empty()) throw DataError("reconstruction_loss: empty batch");
  constexpr std::size_t kChunk = 128;
  double sum_sq = 0.0;  // sum over windows of ||x - xhat||^2
  for (std::size_t off = 0; off < window_ids.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, window_ids.size() - off);
    std::vector<std::size_t> chunk(window_ids.begin() + static_cast<long>(off),
                                   window_ids.begin() + static_cast<long>(off + n));
    Tape tp;
    const double mean_half = reconstruction_loss_batch(tp, m, ws, chunk, nullptr)->v.d[0];
    sum_sq += mean_half * 2.0 * static_cast<double>(n);
  }
  return 0.5 * sum_sq / static_cast<double>(window_ids.size());
}

Mat embed_all(const AutoencoderModel& m, const WindowSet& ws,
              const std::vector<std::size_t>& window_ids) {
  constexpr std::size_t kChunk = 256;
  Mat out(window_ids.size(), m.embedding_dim);
  for (std::size_t off = 0; off < window_ids.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, window_ids.size() - off);
    std::vector<std::size_t> chunk(window_ids.begin() + static_cast<long>(off),
                                   window_ids.begin() + static_cast<long>(off + n));
    Tape tp;
    auto z = encode_batch(tp, m, ws, chunk);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(z->v.row(i), z->v.row(i) + m.embedding_dim, out.row(off + i));
    }
  }
  return out;
}

nlohmann::json model_to_json(const AutoencoderModel& m) {
  nlohmann::json j = tensors_to_json(m.parameters());
  j["format"] = kCheckpointFormatTag;
  j["embedding_dim"] = m.embedding_dim;
  j["channels"] = kNumChannels;
  return j;
}

AutoencoderModel model_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != kCheckpointFormatTag) {
    throw DataError("model checkpoint: missing or unsupported format tag");
  }
  AutoencoderModel m = make_autoencoder(j.at("embedding_dim").get<std::size_t>(), 0);
  nlohmann::json bundle = j;
  bundle["format"] = kTensorFormatTag;
  tensors_from_json(bundle, m.parameters());
  return m;
}

}  // namespace dsc
