#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "dsc/errors.hpp"
#include "dsc/signal.hpp"
#include "dsc/synthetic.hpp"
#include "test_util.hpp"

using namespace dsc;

TEST_SUITE_BEGIN("signal");

TEST_CASE("savitzky golay reproduces constants") {
  const std::vector<double> x(5, 5.0);
  for (int order : {0, 1, 2}) {
    for (int window : {3, 5}) {
      if (order >= window) continue;
      auto y = savitzky_golay(x, window, order);
      for (double v : y) CHECK(v == doctest::Approx(5.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("savitzky golay order 1 keeps a linear ramp") {
  const std::vector<double> x{0, 1, 2, 3, 4, 5, 6};
  auto y = savitzky_golay(x, 5, 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(y[i] - x[i]) < 1e-12);
  }
}

TEST_CASE("savitzky golay impulse center is the window mean") {
  const std::vector<double> x{0, 0, 10, 0, 0};
  auto y = savitzky_golay(x, 5, 1);
  CHECK(y[2] == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("savitzky golay order 1 is identity on affine sequences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int rep = 0; rep < 10; ++rep) {
    const double a = dist(rng), b = dist(rng);
    std::vector<double> x(50);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = a + b * static_cast<double>(i);
    auto y = savitzky_golay(x, 11, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-10);
  }
}

TEST_CASE("savitzky golay order 2 keeps quadratics away from edges") {
  std::vector<double> x(30);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.3 * static_cast<double>(i) * static_cast<double>(i) - 2.0 * static_cast<double>(i);
  }
  auto y = savitzky_golay(x, 7, 2);
  for (std::size_t i = 3; i + 3 < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-9);
}

TEST_CASE("savitzky golay input validation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(savitzky_golay(x, 4, 1), DataError);
  CHECK_THROWS_AS(savitzky_golay(x, 7, 1), DataError);
  CHECK_THROWS_AS(savitzky_golay(x, 5, 5), DataError);
}

TEST_CASE("min max scaling examples") {
  CHECK(min_max_scale({0, 5, 10}) == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(min_max_scale({7, 7, 7}) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(min_max_scale({-2, 0, 2}) == std::vector<double>{0.0, 0.5, 1.0});
}

TEST_CASE("min max scaling is idempotent and order preserving") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(-20.0, 20.0);
  std::vector<double> x(100);
  for (double& v : x) v = dist(rng);
  auto once = min_max_scale(x);
  auto twice = min_max_scale(once);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(once[i] >= 0.0);
    CHECK(once[i] <= 1.0);
    CHECK(std::abs(twice[i] - once[i]) < 1e-12);
  }
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    CHECK(((x[i] < x[i + 1]) == (once[i] < once[i + 1])));
  }
}

TEST_CASE("upsample 4 to 64 Hz interpolates and holds the tail") {
  Channel ch{"EDA", 4.0, {0.0, 1.0}, 0.0};
  Channel up = upsample(ch, 64.0);
  CHECK(up.sample_rate_hz == 64.0);
  REQUIRE(up.samples.size() == 32);
  CHECK(up.samples[0] == 0.0);
  CHECK(up.samples[1] == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
  CHECK(up.samples[16] == 1.0);
  for (std::size_t i = 16; i < 32; ++i) CHECK(up.samples[i] == 1.0);
}

TEST_CASE("upsample keeps originals at their positions") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  Channel ch{"TEMP", 4.0, {}, 0.0};
  for (int i = 0; i < 7; ++i) ch.samples.push_back(dist(rng));
  Channel up = upsample(ch, 64.0);
  REQUIRE(up.samples.size() == 7 * 16);
  for (std::size_t i = 0; i < 7; ++i) CHECK(up.samples[i * 16] == ch.samples[i]);
}

TEST_CASE("upsample of a constant stays constant and rejects bad ratios") {
  Channel ch{"EDA", 4.0, std::vector<double>(10, 3.25), 0.0};
  Channel up = upsample(ch, 64.0);
  for (double v : up.samples) CHECK(v == 3.25);
  Channel same = upsample(ch, 4.0);
  CHECK(same.samples == ch.samples);
  CHECK_THROWS_AS(upsample(ch, 6.0), DataError);
}

namespace {

SignalSession session_with_runs(const std::vector<std::pair<int, std::size_t>>& runs) {
  SignalSession s;
  s.subject_id = "fixture";
  s.label_names = {"a", "b", "c"};
  std::size_t total = 0;
  double t = 0.0;
  for (const auto& [label, len] : runs) {
    s.intervals.push_back(
        LabelInterval{label, t, t + static_cast<double>(len) / 64.0});
    t += static_cast<double>(len) / 64.0;
    total += len;
  }
  std::vector<double> samples(total, 0.5);
  for (const std::string& name : {"EDA", "BVP", "TEMP"}) {
    s.channels.push_back(Channel{name, 64.0, samples, 0.0});
  }
  return s;
}

}  // namespace

TEST_CASE("window counts follow the run-length formula") {
  auto one = make_windows(session_with_runs({{0, 600}}), 600, 1);
  CHECK(one.size() == 1);
  auto many = make_windows(session_with_runs({{0, 1000}}), 600, 1);
  CHECK(many.size() == 401);
  auto mixed = make_windows(session_with_runs({{0, 599}, {1, 700}}), 600, 1);
  CHECK(mixed.size() == 101);  // short run contributes nothing
  for (int lab : mixed.seed_labels) CHECK(lab == 1);
  CHECK_THROWS_AS(make_windows(session_with_runs({{0, 599}}), 600, 1), DataError);
}

TEST_CASE("window count formula on randomized run lengths") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> len_dist(64, 564);
  std::uniform_int_distribution<std::size_t> step_dist(1, 5);
  const std::size_t delta = 64;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t len = len_dist(rng);
    const std::size_t step = step_dist(rng);
    auto ws = make_windows(session_with_runs({{0, len}}), delta, step);
    CHECK(ws.size() == (len - delta) / step + 1);
    CHECK(ws.delta == delta);
  }
}

TEST_CASE("windows never straddle label intervals") {
  auto ws = make_windows(session_with_runs({{0, 128}, {1, 128}}), 100, 1);
  CHECK(ws.size() == 58);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const std::size_t s = ws.window_start_indices[i];
    const bool in_first = s + 100 <= 128;
    const bool in_second = s >= 128;
    CHECK((in_first || in_second));
    CHECK(ws.seed_labels[i] == (in_first ? 0 : 1));
  }
}

TEST_CASE("window materialization matches channel data") {
  auto s = session_with_runs({{0, 80}});
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < 80; ++i) {
      s.channels[j].samples[i] = static_cast<double>(i) / 100.0 + static_cast<double>(j);
    }
  }
  auto ws = make_windows(s, 16, 8);
  Mat w = ws.window(1);
  CHECK(w.rows == 16);
  CHECK(w.cols == 3);
  for (std::size_t t = 0; t < 16; ++t) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(w.at(t, j) == s.channels[j].samples[8 + t]);
    }
  }
  Mat g = ws.gather_timestep({0, 2}, 3);
  CHECK(g.rows == 2);
  CHECK(g.at(0, 0) == s.channels[0].samples[3]);
  CHECK(g.at(1, 2) == s.channels[2].samples[16 + 3]);
}

TEST_CASE("e4 csv ingestion on a minimal fixture") {
  testutil::TempDir dir;
  testutil::write_file(dir.path / "EDA.csv", "1600000000\n4.000000\n1\n2\n3\n4\n5\n6\n7\n8\n");
  testutil::write_file(dir.path / "BVP.csv",
                       "1600000000\n64.000000\n" + [] {
                         std::string s;
                         for (int i = 0; i < 128; ++i) s += "0.5\n";
                         return s;
                       }());
  testutil::write_file(dir.path / "TEMP.csv", "1600000000\n4.000000\n33\n33\n33\n33\n33\n33\n33\n33\n");
  testutil::write_file(dir.path / "labels.csv", "label,t_start,t_end\ncalm,0,1\nstress,1,2\n");

  auto s = ingest_e4_csv(dir.str());
  CHECK(s.channels.size() == 3);
  CHECK(s.channels[1].sample_rate_hz == 64.0);
  CHECK(s.channels[0].samples.size() == 8);
  CHECK(s.intervals.size() == 2);
  CHECK(s.label_names == std::vector<std::string>{"calm", "stress"});
  CHECK(s.intervals[0].label == 0);
  CHECK(s.intervals[1].label == 1);
}

TEST_CASE("e4 csv ingestion errors") {
  testutil::TempDir dir;
  testutil::write_file(dir.path / "EDA.csv", "1600000000\n4\n1\n2\n");
  testutil::write_file(dir.path / "BVP.csv", "1600000000\n64\n1\n2\n");
  testutil::write_file(dir.path / "TEMP.csv", "1600000000\n4\n1\n2\n");

  SUBCASE("missing labels file") {
    CHECK_THROWS_WITH_AS(ingest_e4_csv(dir.str()), doctest::Contains("labels.csv"), DataError);
  }
  SUBCASE("overlapping intervals name the pair") {
    testutil::write_file(dir.path / "labels.csv",
                         "label,t_start,t_end\ncalm,0,10\nstress,5,15\n");
    try {
      ingest_e4_csv(dir.str());
      FAIL("expected overlap rejection");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("calm") != std::string::npos);
      CHECK(msg.find("stress") != std::string::npos);
    }
  }
  SUBCASE("malformed rate line") {
    testutil::write_file(dir.path / "EDA.csv", "1600000000\nfour\n1\n2\n");
    testutil::write_file(dir.path / "labels.csv", "label,t_start,t_end\ncalm,0,1\n");
    CHECK_THROWS_WITH_AS(ingest_e4_csv(dir.str()), doctest::Contains("rate"), DataError);
  }
  SUBCASE("unsupported rate value") {
    testutil::write_file(dir.path / "EDA.csv", "1600000000\n32\n1\n2\n");
    testutil::write_file(dir.path / "labels.csv", "label,t_start,t_end\ncalm,0,1\n");
    CHECK_THROWS_WITH_AS(ingest_e4_csv(dir.str()), doctest::Contains("rate"), DataError);
  }
}

TEST_CASE("preprocessing aligns rates and scales to unit range") {
  std::vector<RegimeSpec> specs(2);
  specs[0].label = "calm";
  specs[0].eda_baseline = 1.0;
  specs[0].noise_sigma = 0.05;
  specs[1].label = "stress";
  specs[1].eda_baseline = 3.0;
  specs[1].noise_sigma = 0.05;
  for (auto& s : specs) s.duration_s = 20.0;

  auto raw = generate(specs, 11);
  auto prep = preprocess_session(raw);
  REQUIRE(prep.channels.size() == 3);
  const std::size_t len = prep.channels[0].samples.size();
  for (const auto& c : prep.channels) {
    CHECK(c.sample_rate_hz == 64.0);
    CHECK(c.samples.size() == len);
    for (double v : c.samples) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(prep.intervals.size() == 2);

  auto ws = make_windows(prep, 128, 16);
  CHECK(ws.size() > 0);
  for (std::size_t i = 0; i < ws.channel_data.size(); ++i) {
    CHECK(ws.channel_data.d[i] >= 0.0);
    CHECK(ws.channel_data.d[i] <= 1.0);
  }
}

TEST_CASE("window cache round trip is exact and reruns byte-identical") {
  auto s = session_with_runs({{0, 96}, {2, 96}});
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& c : s.channels) {
    for (double& v : c.samples) v = dist(rng);
  }
  auto ws = make_windows(s, 32, 8);

  testutil::TempDir dir;
  const std::string p1 = (dir.path / "cache1.json").string();
  const std::string p2 = (dir.path / "cache2.json").string();
  write_window_cache(p1, ws);
  write_window_cache(p2, ws);
  CHECK(testutil::read_file(p1) == testutil::read_file(p2));

  auto back = read_window_cache(p1);
  CHECK(back.delta == ws.delta);
  CHECK(back.seed_labels == ws.seed_labels);
  CHECK(back.window_start_indices == ws.window_start_indices);
  CHECK(back.label_names == ws.label_names);
  CHECK(back.subject_id == ws.subject_id);
  CHECK(back.channel_data.d == ws.channel_data.d);
}

TEST_CASE("session cache round trip allows re-windowing at a new width") {
  auto s = session_with_runs({{0, 200}, {1, 200}});
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& c : s.channels) {
    for (double& v : c.samples) v = dist(rng);
  }

  testutil::TempDir dir;
  const std::string p1 = (dir.path / "session1.json").string();
  const std::string p2 = (dir.path / "session2.json").string();
  write_session_cache(p1, s);
  write_session_cache(p2, s);
  CHECK(testutil::read_file(p1) == testutil::read_file(p2));

  auto back = read_session_cache(p1);
  CHECK(back.subject_id == s.subject_id);
  CHECK(back.seeding_mode == s.seeding_mode);
  CHECK(back.label_names == s.label_names);
  REQUIRE(back.intervals.size() == s.intervals.size());
  for (std::size_t i = 0; i < s.intervals.size(); ++i) {
    CHECK(back.intervals[i].label == s.intervals[i].label);
    CHECK(back.intervals[i].t_start == s.intervals[i].t_start);
    CHECK(back.intervals[i].t_end == s.intervals[i].t_end);
  }
  REQUIRE(back.channels.size() == s.channels.size());
  for (std::size_t i = 0; i < s.channels.size(); ++i) {
    CHECK(back.channels[i].name == s.channels[i].name);
    CHECK(back.channels[i].sample_rate_hz == s.channels[i].sample_rate_hz);
    CHECK(back.channels[i].start_time == s.channels[i].start_time);
    CHECK(back.channels[i].samples == s.channels[i].samples);
  }

  for (std::size_t delta : {16, 25, 40}) {
    auto a = make_windows(s, delta, delta / 2);
    auto b = make_windows(back, delta, delta / 2);
    CHECK(a.size() == b.size());
    CHECK(a.channel_data.d == b.channel_data.d);
    CHECK(a.seed_labels == b.seed_labels);
  }

  const std::string bad = (dir.path / "bad.json").string();
  std::ofstream(bad) << "{\"format\":\"dsc.session/9\"}";
  CHECK_THROWS_AS(read_session_cache(bad), DataError);
}

TEST_SUITE_END();
