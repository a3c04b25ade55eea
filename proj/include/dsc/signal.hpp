#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsc/mat.hpp"

namespace dsc {

struct Channel {
  std::string name;  // EDA, BVP, or TEMP
  double sample_rate_hz = 0.0;
  std::vector<double> samples;
  double start_time = 0.0;  // seconds since session origin
};

struct LabelInterval {
  int label = 0;
  double t_start = 0.0;
  double t_end = 0.0;
};

struct SignalSession {
  std::string subject_id;
  std::vector<Channel> channels;  // exactly EDA, BVP, TEMP in this order
  std::vector<LabelInterval> intervals;
  std::vector<std::string> label_names;  // class id -> name
  std::string seeding_mode = "contextual";
};

// Windows materialize lazily from the scaled channel matrix and offsets.
struct WindowSet {
  Mat channel_data;  // L x 3, values in [0,1]
  std::vector<int> seed_labels;
  std::vector<std::size_t> window_start_indices;
  std::size_t delta = 0;
  std::vector<std::string> label_names;
  std::string subject_id;

  std::size_t size() const { return seed_labels.size(); }
  std::size_t num_classes() const { return label_names.size(); }
  Mat window(std::size_t i) const;
  // rows = one window each, at offset t into the window
  Mat gather_timestep(const std::vector<std::size_t>& window_ids, std::size_t t) const;
};

struct PreprocessConfig {
  int sg_window = 11;
  int sg_order = 1;
  double target_hz = 64.0;
};

std::vector<double> savitzky_golay(const std::vector<double>& samples, int window_length,
                                   int poly_order);
std::vector<double> min_max_scale(const std::vector<double>& samples);
Channel upsample(const Channel& ch, double target_hz);

// Smooths EDA and TEMP at native rate, upsamples all channels to target_hz,
// crops to the common time range, and min-max scales each channel.
SignalSession preprocess_session(const SignalSession& raw, const PreprocessConfig& cfg = {});

WindowSet make_windows(const SignalSession& session, std::size_t delta, std::size_t step);

SignalSession ingest_e4_csv(const std::string& directory);

inline constexpr const char* kWindowFormatTag = "dsc.windows/1";
void write_window_cache(const std::string& path, const WindowSet& ws);
WindowSet read_window_cache(const std::string& path);

// Full preprocessed session, so windows can be re-cut at any width later.
inline constexpr const char* kSessionFormatTag = "dsc.session/1";
void write_session_cache(const std::string& path, const SignalSession& s);
SignalSession read_session_cache(const std::string& path);

}  // namespace dsc
