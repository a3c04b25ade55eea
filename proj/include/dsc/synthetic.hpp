#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsc/signal.hpp"

namespace dsc {

// One labeled signal regime: EDA-like phasic bumps, BVP-like oscillation,
// TEMP-like drift, plus white noise.
struct RegimeSpec {
  std::string label;
  double duration_s = 60.0;
  double eda_baseline = 2.0;
  double eda_bump_rate_hz = 0.1;
  double eda_bump_height = 0.5;
  double bvp_baseline = 0.0;
  double bvp_freq_hz = 1.2;
  double bvp_amplitude = 1.0;
  double temp_baseline = 33.0;
  double temp_drift_per_s = 0.0;
  double noise_sigma = 0.0;
};

// Concatenates regimes into one session at native rates 4/64/4 Hz
// (EDA/BVP/TEMP) with one LabelInterval per regime.
SignalSession generate(const std::vector<RegimeSpec>& specs, std::uint64_t rng_seed);

// Writes the session in the same CSV layout ingest_e4_csv reads.
void write_e4_csv(const SignalSession& session, const std::string& directory);

}  // namespace dsc
