#include "support.hpp"
#include "tactile/signal.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace tactile;

namespace {

Recording constant_recording(std::size_t n, double value) {
  Recording r;
  r.id = "const";
  r.forces = Eigen::MatrixX3d::Constant(static_cast<Eigen::Index>(n), 3, value);
  r.labels.assign(n, GestureState::NoContact);
  return r;
}

Recording sinusoid(std::size_t n, double hz) {
  Recording r = constant_recording(n, 0.0);
  for (Eigen::Index k = 0; k < r.forces.rows(); ++k)
    r.forces.row(k).setConstant(std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(k) / 500.0));
  return r;
}

// Recordings whose every sample carries one state, enough for `snippets` windows.
std::vector<Recording> pool(GestureState s, std::size_t recordings, std::size_t snippets, std::uint64_t seed) {
  std::vector<Recording> out;
  const std::size_t n = 300 + (snippets - 1) * 50;
  for (std::size_t i = 0; i < recordings; ++i)
    out.push_back(oracle::make_recording(std::vector<GestureState>(n, s),
                                         std::string(to_string(s)) + "_" + std::to_string(i), seed + i));
  return out;
}

}  // namespace

TEST_CASE("lowpass keeps constants exactly and preserves length") {
  const Recording r = constant_recording(1000, 3.25);
  const Recording f = lowpass_filter(r, WindowConfig{});
  REQUIRE(f.size() == r.size());
  CHECK((f.forces.array() - 3.25).abs().maxCoeff() < 1e-12);
  CHECK(f.labels == r.labels);
  // idempotent on constants
  CHECK((lowpass_filter(f, WindowConfig{}).forces.array() - 3.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("lowpass attenuates 200 Hz by at least 40 dB") {
  const Recording f = lowpass_filter(sinusoid(5000, 200.0), WindowConfig{});
  const double peak = f.forces.col(0).segment(1000, 3000).cwiseAbs().maxCoeff();
  CHECK(peak <= 0.01);
}

TEST_CASE("lowpass passes 5 Hz nearly unchanged") {
  const Recording f = lowpass_filter(sinusoid(5000, 5.0), WindowConfig{});
  const double peak = f.forces.col(0).segment(1000, 3000).cwiseAbs().maxCoeff();
  CHECK(peak == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("zero-phase filtering keeps a symmetric pulse centered") {
  Recording r = constant_recording(2001, 0.0);
  const double p = 1000.0;
  for (Eigen::Index k = 0; k < r.forces.rows(); ++k)
    r.forces.row(k).setConstant(std::exp(-0.5 * std::pow((static_cast<double>(k) - p) / 15.0, 2)));
  const Recording f = lowpass_filter(r, WindowConfig{});
  Eigen::Index arg = 0;
  f.forces.col(0).maxCoeff(&arg);
  CHECK(arg == 1000);
}

TEST_CASE("lowpass rejects empty recordings and cutoffs at Nyquist") {
  CHECK_THROWS_AS(lowpass_filter(constant_recording(0, 0.0), WindowConfig{}), InputError);
  WindowConfig bad;
  bad.filter_cutoff_hz = 250.0;
  CHECK_THROWS_AS(lowpass_filter(constant_recording(100, 0.0), bad), ConfigError);
}

TEST_CASE("snippet count formula and offsets") {
  CHECK(snippet_count(500, 300, 50) == 5);
  CHECK(snippet_count(299, 300, 50) == 0);
  CHECK(snippet_count(300, 300, 50) == 1);
  CHECK(snippet_count(720000, 300, 50) == 14395);

  Recording r = constant_recording(500, 1.0);
  const SnippetSet s = make_snippets(r, WindowConfig{});
  REQUIRE(s.size() == 5);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].offset == 50 * i);
    CHECK(s[i].length() == 300);
    CHECK(s[i].source_id == "const");
  }
  CHECK(make_snippets(constant_recording(299, 0.0), WindowConfig{}).empty());
}

TEST_CASE("property: snippet offsets are an arithmetic sequence matching the count formula") {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    WindowConfig cfg;
    cfg.snippet_len = 20 + rng() % 200;
    cfg.stride = 1 + rng() % cfg.snippet_len;
    const std::size_t n = rng() % 2000;
    const SnippetSet s = make_snippets(constant_recording(n, 0.0), cfg);
    const std::size_t expected = n >= cfg.snippet_len ? (n - cfg.snippet_len) / cfg.stride + 1 : 0;
    REQUIRE(s.size() == expected);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].offset == i * cfg.stride);
  }
}

TEST_CASE("snippet label is the center sample's state") {
  std::vector<GestureState> labels(300, GestureState::NoContact);
  for (std::size_t k = 150; k < 300; ++k) labels[k] = GestureState::Tap;
  const SnippetSet s = make_snippets(oracle::make_recording(labels, "r"), WindowConfig{});
  REQUIRE(s.size() == 1);
  CHECK(s[0].label == GestureState::Tap);
  labels[150] = GestureState::Grab;
  CHECK(make_snippets(oracle::make_recording(labels, "r"), WindowConfig{})[0].label == GestureState::Grab);
}

TEST_CASE("split honors per-class counts and never shares a recording between splits") {
  std::vector<Recording> recs;
  for (GestureState s : kAllStates)
    for (auto& r : pool(s, 12, 40, 100 + static_cast<std::uint64_t>(ordinal(s)) * 50)) recs.push_back(std::move(r));
  const SplitCounts counts{60, 20, 15};
  const DatasetSplit a = split_dataset(recs, WindowConfig{}, counts, 42);
  CHECK(a.train.size() == 5 * 60);
  CHECK(a.val.size() == 5 * 20);
  CHECK(a.test.size() == 5 * 15);
  for (GestureState st : kAllStates) {
    auto count = [&](const SnippetSet& ss) {
      return std::count_if(ss.begin(), ss.end(), [&](const Snippet& x) { return x.label == st; });
    };
    CHECK(count(a.train) == 60);
    CHECK(count(a.val) == 20);
    CHECK(count(a.test) == 15);
  }
  // exhaustive disjointness scan
  const SnippetSet* sets[] = {&a.train, &a.val, &a.test};
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      for (const Snippet& x : *sets[i])
        for (const Snippet& y : *sets[j]) REQUIRE(x.source_id != y.source_id);

  const DatasetSplit b = split_dataset(recs, WindowConfig{}, counts, 42);
  REQUIRE(b.train.size() == a.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].source_id == b.train[i].source_id);
    CHECK(a.train[i].offset == b.train[i].offset);
  }
}

TEST_CASE("paper-shaped split totals") {
  std::vector<Recording> recs;
  for (GestureState s : kAllStates)
    for (auto& r : pool(s, 20, 30, 7 + static_cast<std::uint64_t>(ordinal(s)) * 100)) recs.push_back(std::move(r));
  const DatasetSplit d = split_dataset(recs, WindowConfig{}, SplitCounts{}, 3);
  CHECK(d.train.size() == 1595);
  CHECK(d.val.size() == 230);
  CHECK(d.test.size() == 135);
}

TEST_CASE("split shortage names the class") {
  CHECK_THROWS_AS(split_dataset({}, WindowConfig{}, SplitCounts{}, 1), ShortageError);
  std::vector<Recording> recs;
  for (GestureState s : kAllStates)
    if (s != GestureState::Slip)
      for (auto& r : pool(s, 20, 30, 5)) recs.push_back(std::move(r));
  try {
    split_dataset(recs, WindowConfig{}, SplitCounts{}, 1);
    FAIL("expected a shortage");
  } catch (const ShortageError& e) {
    CHECK(e.state() == GestureState::Slip);
    CHECK(std::string(e.what()).find("slip") != std::string::npos);
  }
}

TEST_CASE("recording CSV round trip") {
  std::vector<GestureState> labels(400, GestureState::Touch);
  labels[0] = GestureState::NoContact;
  const Recording r = oracle::make_recording(labels, "rt", 9);
  std::stringstream ss;
  write_recording_csv(ss, r);
  const std::string text = ss.str();
  CHECK(text.rfind("t,fx,fy,fz,label\n", 0) == 0);
  CHECK(text.find("0.000000,") != std::string::npos);
  const Recording back = read_recording_csv(ss, "rt");
  REQUIRE(back.size() == r.size());
  CHECK(back.labels == r.labels);
  CHECK((back.forces - r.forces).cwiseAbs().maxCoeff() <= 5e-7);
  std::stringstream again;
  write_recording_csv(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("recording CSV rejects bad headers, labels and rates") {
  std::stringstream bad_header("time,x,y,z,label\n0,0,0,0,tap\n");
  CHECK_THROWS_AS(read_recording_csv(bad_header, "x"), InputError);
  std::stringstream bad_label("t,fx,fy,fz,label\n0.000000,0,0,0,poke\n0.002000,0,0,0,tap\n");
  CHECK_THROWS_AS(read_recording_csv(bad_label, "x"), InputError);
  std::stringstream bad_rate("t,fx,fy,fz,label\n0.000000,0,0,0,tap\n0.001000,0,0,0,tap\n0.002000,0,0,0,tap\n");
  CHECK_THROWS_AS(read_recording_csv(bad_rate, "x"), InputError);
}
