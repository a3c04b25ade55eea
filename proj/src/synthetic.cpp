#include "dsc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

constexpr double kEdaRate = 4.0;
constexpr double kBvpRate = 64.0;
constexpr double kTempRate = 4.0;
constexpr double kBumpDecayS = 2.0;

void append_regime(const RegimeSpec& spec, double t_offset, std::mt19937_64& rng,
                   std::vector<double>& eda, std::vector<double>& bvp,
                   std::vector<double>& temp) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::exponential_distribution<double> gap(std::max(spec.eda_bump_rate_hz, 1e-12));

  std::vector<double> bumps;
  if (spec.eda_bump_rate_hz > 0.0) {
    double t = gap(rng);
    while (t < spec.duration_s) {
      bumps.push_back(t);
      t += gap(rng);
    }
  }

  const std::size_t n_eda = static_cast<std::size_t>(std::llround(spec.duration_s * kEdaRate));
  for (std::size_t i = 0; i < n_eda; ++i) {
    const double t = static_cast<double>(i) / kEdaRate;
    double v = spec.eda_baseline;
    for (double b : bumps) {
      if (t >= b) v += spec.eda_bump_height * std::exp(-(t - b) / kBumpDecayS);
    }
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
    eda.push_back(v);
  }

  const std::size_t n_bvp = static_cast<std::size_t>(std::llround(spec.duration_s * kBvpRate));
  for (std::size_t i = 0; i < n_bvp; ++i) {
    const double t = t_offset + static_cast<double>(i) / kBvpRate;
    double v = spec.bvp_baseline + spec.bvp_amplitude * std::sin(2.0 * M_PI * spec.bvp_freq_hz * t);
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
    bvp.push_back(v);
  }

  const std::size_t n_temp = static_cast<std::size_t>(std::llround(spec.duration_s * kTempRate));
  for (std::size_t i = 0; i < n_temp; ++i) {
    const double t = static_cast<double>(i) / kTempRate;
    double v = spec.temp_baseline + spec.temp_drift_per_s * t;
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
    temp.push_back(v);
  }
}

}  // namespace

SignalSession generate(const std::vector<RegimeSpec>& specs, std::uint64_t rng_seed) {
  if (specs.empty()) throw DataError("generate: no regimes");
  for (const auto& s : specs) {
    if (s.duration_s <= 0.0) {
      throw DataError("generate: regime '" + s.label + "' has non-positive duration");
    }
  }
  std::mt19937_64 rng(rng_seed);
  SignalSession session;
  session.subject_id = "synthetic";

  std::map<std::string, int> ids;
  for (const auto& s : specs) ids.emplace(s.label, 0);
  int next = 0;
  for (auto& [name, id] : ids) {
    id = next++;
    session.label_names.push_back(name);
  }

  std::vector<double> eda, bvp, temp;
  double t = 0.0;
  for (const auto& s : specs) {
    append_regime(s, t, rng, eda, bvp, temp);
    session.intervals.push_back(LabelInterval{ids[s.label], t, t + s.duration_s});
    t += s.duration_s;
  }
  session.channels = {Channel{"EDA", kEdaRate, std::move(eda), 0.0},
                      Channel{"BVP", kBvpRate, std::move(bvp), 0.0},
                      Channel{"TEMP", kTempRate, std::move(temp), 0.0}};
  return session;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_channel(const std::filesystem::path& file, const Channel& ch, double epoch_base) {
  std::ofstream out(file);
  if (!out) throw DataError("write_e4_csv: cannot write " + file.string());
  out << fmt_double(epoch_base + ch.start_time) << "\n";
  out << fmt_double(ch.sample_rate_hz) << "\n";
  for (double v : ch.samples) out << fmt_double(v) << "\n";
}

}  // namespace

void write_e4_csv(const SignalSession& session, const std::string& directory) {
  const std::filesystem::path dir(directory);
  std::filesystem::create_directories(dir);
  constexpr double kEpochBase = 1600000000.0;
  for (const auto& ch : session.channels) {
    write_channel(dir / (ch.name + ".csv"), ch, kEpochBase);
  }
  std::ofstream out(dir / "labels.csv");
  if (!out) throw DataError("write_e4_csv: cannot write labels.csv");
  out << "label,t_start,t_end\n";
  for (const auto& iv : session.intervals) {
    out << session.label_names[static_cast<std::size_t>(iv.label)] << "," << fmt_double(iv.t_start)
        << "," << fmt_double(iv.t_end) << "\n";
  }
}

}  // namespace dsc
