#include "dsc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dsc/errors.hpp"
#include "dsc/serialize.hpp"

namespace dsc {

namespace {

// Center-evaluation least-squares weights for one smoothing window.
std::vector<double> sg_weights(int window_length, int poly_order) {
  const int m = window_length / 2;
  const int p = poly_order + 1;
  // normal-equation matrix A[j][l] = sum_i (i-m)^(j+l)
  std::vector<double> a(static_cast<std::size_t>(p) * p, 0.0);
  for (int i = -m; i <= m; ++i) {
    double pow_j = 1.0;
    for (int j = 0; j < p; ++j) {
      double pow_l = pow_j;
      for (int l = 0; l < p; ++l) {
        a[static_cast<std::size_t>(j) * p + l] += pow_l;
        pow_l *= i;
      }
      pow_j *= i;
    }
  }
  // solve A z = e0 by Gaussian elimination with partial pivoting
  std::vector<double> z(p, 0.0);
  z[0] = 1.0;
  for (int col = 0; col < p; ++col) {
    int piv = col;
    for (int r = col + 1; r < p; ++r) {
      if (std::abs(a[static_cast<std::size_t>(r) * p + col]) >
          std::abs(a[static_cast<std::size_t>(piv) * p + col])) {
        piv = r;
      }
    }
    if (a[static_cast<std::size_t>(piv) * p + col] == 0.0) {
      throw NumericalError("savitzky_golay: singular fit matrix");
    }
    if (piv != col) {
      for (int c = 0; c < p; ++c) {
        std::swap(a[static_cast<std::size_t>(piv) * p + c],
                  a[static_cast<std::size_t>(col) * p + c]);
      }
      std::swap(z[piv], z[col]);
    }
    const double diag = a[static_cast<std::size_t>(col) * p + col];
    for (int r = col + 1; r < p; ++r) {
      const double f = a[static_cast<std::size_t>(r) * p + col] / diag;
      if (f == 0.0) continue;
      for (int c = col; c < p; ++c) {
        a[static_cast<std::size_t>(r) * p + c] -= f * a[static_cast<std::size_t>(col) * p + c];
      }
      z[r] -= f * z[col];
    }
  }
  for (int col = p - 1; col >= 0; --col) {
    for (int c = col + 1; c < p; ++c) {
      z[col] -= a[static_cast<std::size_t>(col) * p + c] * z[c];
    }
    z[col] /= a[static_cast<std::size_t>(col) * p + col];
  }
  std::vector<double> w(window_length, 0.0);
  for (int i = -m; i <= m; ++i) {
    double pw = 1.0, acc = 0.0;
    for (int j = 0; j < p; ++j) {
      acc += z[j] * pw;
      pw *= i;
    }
    w[i + m] = acc;
  }
  return w;
}

double padded_at(const std::vector<double>& x, long long k) {
  const long long n = static_cast<long long>(x.size());
  // odd reflection about the edge value continues lines exactly
  if (k < 0) return 2.0 * x[0] - x[static_cast<std::size_t>(-k)];
  if (k >= n) return 2.0 * x[static_cast<std::size_t>(n - 1)] - x[static_cast<std::size_t>(2 * (n - 1) - k)];
  return x[static_cast<std::size_t>(k)];
}

}  // namespace

std::vector<double> savitzky_golay(const std::vector<double>& samples, int window_length,
                                   int poly_order) {
  if (window_length <= 0 || window_length % 2 == 0) {
    throw DataError("savitzky_golay: window_length must be odd and positive, got " +
                    std::to_string(window_length));
  }
  if (poly_order < 0 || poly_order >= window_length) {
    throw DataError("savitzky_golay: poly_order " + std::to_string(poly_order) +
                    " must lie in [0, window_length)");
  }
  if (samples.size() < static_cast<std::size_t>(window_length)) {
    throw DataError("savitzky_golay: sequence length " + std::to_string(samples.size()) +
                    " shorter than window " + std::to_string(window_length));
  }
  const std::vector<double> w = sg_weights(window_length, poly_order);
  const int m = window_length / 2;
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double acc = 0.0;
    for (int k = -m; k <= m; ++k) {
      acc += w[k + m] * padded_at(samples, static_cast<long long>(i) + k);
    }
    out[i] = acc;
  }
  return out;
}

std::vector<double> min_max_scale(const std::vector<double>& samples) {
  if (samples.empty()) throw DataError("min_max_scale: empty sequence");
  const auto [mn_it, mx_it] = std::minmax_element(samples.begin(), samples.end());
  const double mn = *mn_it, mx = *mx_it;
  std::vector<double> out(samples.size());
  if (mx == mn) return out;  // degenerate constant channel maps to zeros
  const double inv = 1.0 / (mx - mn);
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = (samples[i] - mn) * inv;
  return out;
}

Channel upsample(const Channel& ch, double target_hz) {
  if (ch.samples.empty()) throw DataError("upsample: channel " + ch.name + " has no samples");
  const double ratio = target_hz / ch.sample_rate_hz;
  const long long r = std::llround(ratio);
  if (r < 1 || std::abs(ratio - static_cast<double>(r)) > 1e-9) {
    throw DataError("upsample: target " + std::to_string(target_hz) + " Hz is not an integer multiple of " +
                    std::to_string(ch.sample_rate_hz) + " Hz for channel " + ch.name);
  }
  Channel out = ch;
  out.sample_rate_hz = target_hz;
  if (r == 1) return out;
  const std::size_t n = ch.samples.size();
  const std::size_t rr = static_cast<std::size_t>(r);
  out.samples.assign(n * rr, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double a = ch.samples[i], b = ch.samples[i + 1];
    for (std::size_t f = 0; f < rr; ++f) {
      out.samples[i * rr + f] = a + (b - a) * (static_cast<double>(f) / static_cast<double>(rr));
    }
  }
  // anchor the last original sample, then hold it to keep length n*r
  for (std::size_t k = (n - 1) * rr; k < n * rr; ++k) out.samples[k] = ch.samples[n - 1];
  return out;
}

namespace {

const Channel& find_channel(const SignalSession& s, const std::string& name) {
  for (const auto& c : s.channels) {
    if (c.name == name) return c;
  }
  throw DataError("session " + s.subject_id + ": missing channel " + name);
}

}  // namespace

SignalSession preprocess_session(const SignalSession& raw, const PreprocessConfig& cfg) {
  if (raw.channels.size() != 3) {
    throw DataError("session " + raw.subject_id + ": expected 3 channels, got " +
                    std::to_string(raw.channels.size()));
  }
  SignalSession out;
  out.subject_id = raw.subject_id;
  out.intervals = raw.intervals;
  out.label_names = raw.label_names;
  out.seeding_mode = raw.seeding_mode;

  for (const char* raw_name : {"EDA", "BVP", "TEMP"}) {
    const std::string name(raw_name);
    Channel ch = find_channel(raw, name);
    if (ch.samples.empty()) throw DataError("channel " + name + ": no samples");
    if (ch.sample_rate_hz != 4.0 && ch.sample_rate_hz != 64.0) {
      throw DataError("channel " + name + ": unsupported sample rate " +
                      std::to_string(ch.sample_rate_hz));
    }
    if (name != "BVP") {
      ch.samples = savitzky_golay(ch.samples, cfg.sg_window, cfg.sg_order);
    }
    out.channels.push_back(upsample(ch, cfg.target_hz));
  }

  // crop to the common covered time range
  double t_lo = -1e300, t_hi = 1e300;
  for (const auto& c : out.channels) {
    t_lo = std::max(t_lo, c.start_time);
    t_hi = std::min(t_hi, c.start_time + static_cast<double>(c.samples.size()) / c.sample_rate_hz);
  }
  if (t_hi <= t_lo) throw DataError("session " + raw.subject_id + ": channels do not overlap in time");
  std::size_t common_len = SIZE_MAX;
  std::vector<std::size_t> begin(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = out.channels[i];
    begin[i] = static_cast<std::size_t>(std::llround((t_lo - c.start_time) * c.sample_rate_hz));
    common_len = std::min(common_len, c.samples.size() - begin[i]);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    auto& c = out.channels[i];
    std::vector<double> cropped(c.samples.begin() + static_cast<long>(begin[i]),
                                c.samples.begin() + static_cast<long>(begin[i] + common_len));
    c.samples = min_max_scale(cropped);
    c.start_time = 0.0;
  }
  // label times were relative to the latest-starting channel, which is t_lo
  if (t_lo != 0.0) {
    for (auto& iv : out.intervals) {
      iv.t_start -= t_lo;
      iv.t_end -= t_lo;
    }
  }
  return out;
}

WindowSet make_windows(const SignalSession& session, std::size_t delta, std::size_t step) {
  if (delta < 1 || step < 1) {
    throw DataError("make_windows: delta and step must be >= 1");
  }
  if (session.channels.size() != 3) {
    throw DataError("make_windows: session must have 3 preprocessed channels");
  }
  const std::size_t len = session.channels[0].samples.size();
  const double rate = session.channels[0].sample_rate_hz;
  for (const auto& c : session.channels) {
    if (c.samples.size() != len || c.sample_rate_hz != rate) {
      throw DataError("make_windows: channels not aligned to one rate and length");
    }
  }

  WindowSet ws;
  ws.delta = delta;
  ws.label_names = session.label_names;
  ws.subject_id = session.subject_id;
  ws.channel_data = Mat(len, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < len; ++i) ws.channel_data.at(i, j) = session.channels[j].samples[i];
  }

  for (const auto& iv : session.intervals) {
    const long long lo = static_cast<long long>(std::ceil(iv.t_start * rate - 1e-9));
    const long long hi = static_cast<long long>(std::ceil(iv.t_end * rate - 1e-9));
    const std::size_t run_begin = static_cast<std::size_t>(std::max(0LL, lo));
    const std::size_t run_end = static_cast<std::size_t>(std::clamp(hi, 0LL, static_cast<long long>(len)));
    if (run_end < run_begin + delta) continue;
    const std::size_t count = (run_end - run_begin - delta) / step + 1;
    for (std::size_t w = 0; w < count; ++w) {
      ws.window_start_indices.push_back(run_begin + w * step);
      ws.seed_labels.push_back(iv.label);
    }
  }
  if (ws.seed_labels.empty()) {
    throw DataError("make_windows: no labeled run is at least delta=" + std::to_string(delta) +
                    " samples long");
  }
  return ws;
}

Mat WindowSet::window(std::size_t i) const {
  Mat w(delta, 3);
  const std::size_t s = window_start_indices[i];
  std::copy(channel_data.row(s), channel_data.row(s) + delta * 3, w.d.begin());
  return w;
}

Mat WindowSet::gather_timestep(const std::vector<std::size_t>& window_ids, std::size_t t) const {
  Mat x(window_ids.size(), 3);
  for (std::size_t b = 0; b < window_ids.size(); ++b) {
    const double* src = channel_data.row(window_start_indices[window_ids[b]] + t);
    double* dst = x.row(b);
    dst[0] = src[0];
    dst[1] = src[1];
    dst[2] = src[2];
  }
  return x;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
    std::size_t p = 0;
    while (p < cur.size() && cur[p] == ' ') ++p;
    out.push_back(cur.substr(p));
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse number from '" + s + "'");
  }
}

Channel read_e4_channel(const std::filesystem::path& file, const std::string& name) {
  std::ifstream in(file);
  if (!in) throw DataError("ingest: missing file " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("ingest: " + file.string() + " is empty");
  Channel ch;
  ch.name = name;
  const double epoch = parse_double(split_csv_line(line)[0], file.string() + " line 1");
  if (!std::getline(in, line)) throw DataError("ingest: " + file.string() + " has no rate line");
  ch.sample_rate_hz = parse_double(split_csv_line(line)[0], file.string() + " line 2 (rate)");
  if (ch.sample_rate_hz != 4.0 && ch.sample_rate_hz != 64.0) {
    throw DataError("ingest: " + file.string() + ": rate must be 4 or 64, got " +
                    std::to_string(ch.sample_rate_hz));
  }
  std::size_t ln = 2;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty() || line == "\r") continue;
    ch.samples.push_back(parse_double(split_csv_line(line)[0], file.string() + " line " + std::to_string(ln)));
  }
  if (ch.samples.empty()) throw DataError("ingest: " + file.string() + " has no samples");
  ch.start_time = epoch;  // converted to session-relative by the caller
  return ch;
}

}  // namespace

SignalSession ingest_e4_csv(const std::string& directory) {
  const std::filesystem::path dir(directory);
  SignalSession s;
  s.subject_id = dir.filename().string();
  if (s.subject_id.empty()) s.subject_id = dir.parent_path().filename().string();

  s.channels.push_back(read_e4_channel(dir / "EDA.csv", "EDA"));
  s.channels.push_back(read_e4_channel(dir / "BVP.csv", "BVP"));
  s.channels.push_back(read_e4_channel(dir / "TEMP.csv", "TEMP"));

  // origin = latest-starting channel; label times are relative to it
  double origin = -1e300;
  for (const auto& c : s.channels) origin = std::max(origin, c.start_time);
  for (auto& c : s.channels) c.start_time -= origin;

  const std::filesystem::path labels = dir / "labels.csv";
  std::ifstream in(labels);
  if (!in) throw DataError("ingest: missing file " + labels.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("ingest: " + labels.string() + " is empty");
  {
    auto header = split_csv_line(line);
    if (header.size() != 3 || header[0] != "label" || header[1] != "t_start" || header[2] != "t_end") {
      throw DataError("ingest: " + labels.string() + ": header must be label,t_start,t_end");
    }
  }
  struct RawInterval {
    std::string name;
    double t0, t1;
  };
  std::vector<RawInterval> raw;
  std::size_t ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 3) {
      throw DataError("ingest: " + labels.string() + " line " + std::to_string(ln) +
                      ": expected 3 columns");
    }
    RawInterval iv{cells[0], parse_double(cells[1], labels.string() + " t_start"),
                   parse_double(cells[2], labels.string() + " t_end")};
    if (iv.t0 >= iv.t1) {
      throw DataError("ingest: " + labels.string() + " line " + std::to_string(ln) +
                      ": t_start must be < t_end");
    }
    raw.push_back(std::move(iv));
  }
  if (raw.empty()) throw DataError("ingest: " + labels.string() + " has no intervals");

  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.t0 < b.t0; });
  for (std::size_t i = 0; i + 1 < raw.size(); ++i) {
    if (raw[i].t1 > raw[i + 1].t0 + 1e-12) {
      throw DataError("ingest: overlapping intervals '" + raw[i].name + "' [" +
                      std::to_string(raw[i].t0) + "," + std::to_string(raw[i].t1) + ") and '" +
                      raw[i + 1].name + "' [" + std::to_string(raw[i + 1].t0) + "," +
                      std::to_string(raw[i + 1].t1) + ")");
    }
  }

  std::map<std::string, int> ids;
  for (const auto& iv : raw) ids.emplace(iv.name, 0);
  int next = 0;
  for (auto& [name, id] : ids) {
    id = next++;
    s.label_names.push_back(name);
  }
  for (const auto& iv : raw) {
    s.intervals.push_back(LabelInterval{ids[iv.name], iv.t0, iv.t1});
  }
  return s;
}

void write_window_cache(const std::string& path, const WindowSet& ws) {
  std::map<std::string, std::size_t> class_counts;
  for (int lab : ws.seed_labels) class_counts[ws.label_names[static_cast<std::size_t>(lab)]]++;
  nlohmann::json j{{"format", kWindowFormatTag},
                   {"subject_id", ws.subject_id},
                   {"delta", ws.delta},
                   {"label_names", ws.label_names},
                   {"seed_labels", ws.seed_labels},
                   {"window_start_indices", ws.window_start_indices},
                   {"class_window_counts", class_counts},
                   {"channel_rows", ws.channel_data.rows},
                   {"channel_values", ws.channel_data.d}};
  write_json_file(path, j);
}

WindowSet read_window_cache(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.contains("format") || j["format"] != kWindowFormatTag) {
    throw DataError("window cache " + path + ": missing or unsupported format tag");
  }
  WindowSet ws;
  ws.subject_id = j.at("subject_id").get<std::string>();
  ws.delta = j.at("delta").get<std::size_t>();
  ws.label_names = j.at("label_names").get<std::vector<std::string>>();
  ws.seed_labels = j.at("seed_labels").get<std::vector<int>>();
  ws.window_start_indices = j.at("window_start_indices").get<std::vector<std::size_t>>();
  const std::size_t rows = j.at("channel_rows").get<std::size_t>();
  ws.channel_data = Mat(rows, 3);
  ws.channel_data.d = j.at("channel_values").get<std::vector<double>>();
  if (ws.channel_data.d.size() != rows * 3) {
    throw DataError("window cache " + path + ": channel value count mismatch");
  }
  return ws;
}

void write_session_cache(const std::string& path, const SignalSession& s) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : s.channels) {
    channels.push_back({{"name", c.name},
                        {"sample_rate_hz", c.sample_rate_hz},
                        {"start_time", c.start_time},
                        {"samples", c.samples}});
  }
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& iv : s.intervals) {
    intervals.push_back({{"label", iv.label}, {"t_start", iv.t_start}, {"t_end", iv.t_end}});
  }
  nlohmann::json j{{"format", kSessionFormatTag},
                   {"subject_id", s.subject_id},
                   {"seeding_mode", s.seeding_mode},
                   {"label_names", s.label_names},
                   {"intervals", intervals},
                   {"channels", channels}};
  write_json_file(path, j);
}

SignalSession read_session_cache(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.contains("format") || j["format"] != kSessionFormatTag) {
    throw DataError("session cache " + path + ": missing or unsupported format tag");
  }
  SignalSession s;
  s.subject_id = j.at("subject_id").get<std::string>();
  s.seeding_mode = j.at("seeding_mode").get<std::string>();
  s.label_names = j.at("label_names").get<std::vector<std::string>>();
  for (const auto& iv : j.at("intervals")) {
    s.intervals.push_back(LabelInterval{iv.at("label").get<int>(), iv.at("t_start").get<double>(),
                                        iv.at("t_end").get<double>()});
  }
  for (const auto& cj : j.at("channels")) {
    Channel c;
    c.name = cj.at("name").get<std::string>();
    c.sample_rate_hz = cj.at("sample_rate_hz").get<double>();
    c.start_time = cj.at("start_time").get<double>();
    c.samples = cj.at("samples").get<std::vector<double>>();
    s.channels.push_back(std::move(c));
  }
  return s;
}

}  // namespace dsc
