#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dsc/errors.hpp"
#include "dsc/signal.hpp"
#include "dsc/synthetic.hpp"
#include "test_util.hpp"

using namespace dsc;

namespace {

std::vector<RegimeSpec> two_regimes(double duration_s, double sigma) {
  std::vector<RegimeSpec> specs(2);
  specs[0].label = "calm";
  specs[0].duration_s = duration_s;
  specs[0].eda_baseline = 1.0;
  specs[0].bvp_freq_hz = 1.0;
  specs[0].temp_baseline = 33.0;
  specs[0].noise_sigma = sigma;
  specs[1].label = "stress";
  specs[1].duration_s = duration_s;
  specs[1].eda_baseline = 3.0;
  specs[1].bvp_freq_hz = 2.0;
  specs[1].temp_baseline = 34.0;
  specs[1].noise_sigma = sigma;
  return specs;
}

}  // namespace

TEST_SUITE_BEGIN("synthetic");

TEST_CASE("two 60 second regimes produce the expected layout") {
  auto s = generate(two_regimes(60.0, 0.1), 1);
  CHECK(s.intervals.size() == 2);
  CHECK(s.channels[0].name == "EDA");
  CHECK(s.channels[0].samples.size() == 480);
  CHECK(s.channels[0].sample_rate_hz == 4.0);
  CHECK(s.channels[1].samples.size() == 7680);
  CHECK(s.channels[1].sample_rate_hz == 64.0);
  CHECK(s.intervals[0].t_start == 0.0);
  CHECK(s.intervals[0].t_end == 60.0);
  CHECK(s.intervals[1].t_end == 120.0);
}

TEST_CASE("generation is deterministic in the seed") {
  auto a = generate(two_regimes(20.0, 0.3), 77);
  auto b = generate(two_regimes(20.0, 0.3), 77);
  auto c = generate(two_regimes(20.0, 0.3), 78);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.channels[i].samples == b.channels[i].samples);
  }
  CHECK(a.channels[0].samples != c.channels[0].samples);
}

TEST_CASE("zero duration regime is rejected") {
  auto specs = two_regimes(10.0, 0.0);
  specs[1].duration_s = 0.0;
  CHECK_THROWS_AS(generate(specs, 1), DataError);
}

TEST_CASE("noise-free distinct baselines separate by channel mean") {
  auto specs = two_regimes(30.0, 0.0);
  specs[0].eda_bump_rate_hz = 0.0;
  specs[1].eda_bump_rate_hz = 0.0;
  auto ws = make_windows(preprocess_session(generate(specs, 2)), 128, 16);

  double max_calm = -1.0, min_stress = 2.0;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    Mat w = ws.window(i);
    double mean = 0.0;
    for (std::size_t t = 0; t < w.rows; ++t) mean += w.at(t, 0);
    mean /= static_cast<double>(w.rows);
    if (ws.seed_labels[i] == 0) max_calm = std::max(max_calm, mean);
    else min_stress = std::min(min_stress, mean);
  }
  CHECK(max_calm < min_stress);
}

TEST_CASE("csv round trip reproduces the session exactly") {
  auto s = generate(two_regimes(15.0, 0.2), 42);
  testutil::TempDir dir;
  write_e4_csv(s, dir.str());
  auto back = ingest_e4_csv(dir.str());
  REQUIRE(back.channels.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.channels[i].name == s.channels[i].name);
    CHECK(back.channels[i].sample_rate_hz == s.channels[i].sample_rate_hz);
    CHECK(back.channels[i].samples == s.channels[i].samples);
    CHECK(back.channels[i].start_time == s.channels[i].start_time);
  }
  CHECK(back.label_names == s.label_names);
  REQUIRE(back.intervals.size() == s.intervals.size());
  for (std::size_t i = 0; i < s.intervals.size(); ++i) {
    CHECK(back.intervals[i].label == s.intervals[i].label);
    CHECK(back.intervals[i].t_start == s.intervals[i].t_start);
    CHECK(back.intervals[i].t_end == s.intervals[i].t_end);
  }
}

TEST_SUITE_END();
