#include "tactile/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace tactile {

void Range::check(const char* name) const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    throw ConfigError(std::string("generator range '") + name + "' must satisfy lo < hi");
}

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t to_samples(double seconds, double rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

double log_uniform(const Range& r, std::mt19937_64& rng) {
  return std::exp(std::uniform_real_distribution<double>(std::log(r.lo), std::log(r.hi))(rng));
}

Eigen::RowVector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::RowVector3d u;
  do u << n(rng), n(rng), n(rng);
  while (u.norm() < 1e-6);
  return u / u.norm();
}

double random_sign(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; }

// Raised-cosine bump of n samples.
double pulse(std::size_t k, std::size_t n) {
  return 0.5 * (1.0 - std::cos(2.0 * kPi * (static_cast<double>(k) + 0.5) / static_cast<double>(n)));
}

// Flat-top envelope with raised-cosine ramps of `ramp` samples at either end.
double plateau(std::size_t k, std::size_t n, std::size_t ramp) {
  const auto ramp_at = [&](std::size_t i) { return 0.5 * (1.0 - std::cos(kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(ramp))); };
  if (k < ramp) return ramp_at(k);
  if (k >= n - ramp) return ramp_at(n - 1 - k);
  return 1.0;
}

// Unit-RMS band-limited noise as a sum of random-phase tones.
Eigen::VectorXd band_noise(std::size_t n, const Range& band, double rate, std::mt19937_64& rng) {
  constexpr int kTones = 24;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  for (int t = 0; t < kTones; ++t) {
    const double f = band.sample(rng), ph = phase(rng);
    for (std::size_t k = 0; k < n; ++k)
      x(static_cast<Eigen::Index>(k)) += std::sin(2.0 * kPi * f * static_cast<double>(k) / rate + ph);
  }
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(std::max<std::size_t>(n, 1)));
  return rms > 0.0 ? Eigen::VectorXd(x / rms) : x;
}

struct Builder {
  const GestureParams& p;
  std::mt19937_64& rng;
  std::vector<Eigen::RowVector3d> force;
  std::vector<GestureState> labels;

  void quiet(std::size_t n) {
    force.insert(force.end(), n, Eigen::RowVector3d::Zero());
    labels.insert(labels.end(), n, GestureState::NoContact);
  }
  std::size_t begin_event(std::size_t n, GestureState s) {
    const std::size_t start = force.size();
    quiet(n);
    std::fill(labels.begin() + static_cast<std::ptrdiff_t>(start), labels.end(), s);
    return start;
  }
  double t(std::size_t k) const { return static_cast<double>(k) / p.rate_hz; }

  void tap() {
    const std::size_t n = std::max<std::size_t>(to_samples(p.tap_duration_s.sample(rng), p.rate_hz), 2);
    const double amp = log_uniform(p.tap_amplitude.value_or(p.amplitude), rng);
    const Eigen::RowVector3d dir = random_unit(rng);
    const std::size_t s = begin_event(n, GestureState::Tap);
    for (std::size_t k = 0; k < n; ++k) force[s + k] = amp * pulse(k, n) * dir;
  }

  std::size_t contact(GestureState state, std::size_t& ramp) {
    const std::size_t n = to_samples(p.contact_duration_s.sample(rng), p.rate_hz);
    ramp = std::max<std::size_t>(to_samples(p.ramp_s.sample(rng), p.rate_hz), 1);
    ramp = std::min(ramp, n / 2);
    return begin_event(n, state);
  }

  void touch() {
    std::size_t ramp = 0;
    const std::size_t s = contact(GestureState::Touch, ramp), n = force.size() - s;
    const double amp = log_uniform(p.amplitude, rng);
    const int axis = std::uniform_int_distribution<int>(0, 2)(rng);
    Eigen::RowVector3d dir;
    std::uniform_real_distribution<double> off(-p.touch_off_axis_max, p.touch_off_axis_max);
    for (int c = 0; c < 3; ++c) dir(c) = c == axis ? random_sign(rng) : off(rng);
    const double f = p.touch_tremor_hz.sample(rng), depth = p.touch_tremor_depth.sample(rng);
    const double ph = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
    for (std::size_t k = 0; k < n; ++k) {
      const double tremor = 1.0 + depth * std::sin(2.0 * kPi * f * t(k) + ph);
      force[s + k] = amp * plateau(k, n, ramp) * tremor * dir;
    }
  }

  void grab() {
    std::size_t ramp = 0;
    const std::size_t s = contact(GestureState::Grab, ramp), n = force.size() - s;
    const double amp = log_uniform(p.amplitude, rng);
    const int a = std::uniform_int_distribution<int>(0, 2)(rng);
    const int b = (a + std::uniform_int_distribution<int>(1, 2)(rng)) % 3;
    const double sa = random_sign(rng), sb = -sa;
    const double ratio = p.grab_ratio.sample(rng);
    const double f = p.grab_waver_hz.sample(rng), depth = p.grab_waver_depth.sample(rng);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    const double pa = phase(rng), pb = pa + std::uniform_real_distribution<double>(0.0, kPi / 2.0)(rng);
    for (std::size_t k = 0; k < n; ++k) {
      const double env = amp * plateau(k, n, ramp);
      Eigen::RowVector3d v = Eigen::RowVector3d::Zero();
      v(a) = sa * env * (1.0 + depth * std::sin(2.0 * kPi * f * t(k) + pa));
      v(b) = sb * ratio * env * (1.0 + depth * std::sin(2.0 * kPi * f * t(k) + pb));
      force[s + k] = v;
    }
  }

  void slip() {
    std::size_t ramp = 0;
    const std::size_t s = contact(GestureState::Slip, ramp), n = force.size() - s;
    const double amp = log_uniform(p.amplitude, rng);
    const int axis = std::uniform_int_distribution<int>(0, 2)(rng);
    const int tangent = (axis + std::uniform_int_distribution<int>(1, 2)(rng)) % 3;
    const double sign = random_sign(rng);
    const double drift = random_sign(rng) * p.slip_drift.sample(rng);
    const double level = p.slip_noise_level.sample(rng);
    const double slide = random_sign(rng) * std::uniform_real_distribution<double>(0.1, 0.3)(rng);
    std::array<Eigen::VectorXd, 3> friction;
    for (auto& ch : friction) ch = band_noise(n, p.slip_band_hz, p.rate_hz, rng);
    for (std::size_t k = 0; k < n; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(n);
      const double env = amp * plateau(k, n, ramp);
      Eigen::RowVector3d v = Eigen::RowVector3d::Zero();
      v(axis) = sign * (1.0 + drift * (frac - 0.5));
      v(tangent) += slide * frac;
      for (int c = 0; c < 3; ++c) v(c) += level * friction[static_cast<std::size_t>(c)](static_cast<Eigen::Index>(k));
      force[s + k] = env * v;
    }
  }
};

}  // namespace

void GestureParams::validate() const {
  if (!(rate_hz > 0.0)) throw ConfigError("generator rate must be positive");
  if (!(noise_std >= 0.0)) throw ConfigError("sensor-noise std must be non-negative");
  amplitude.check("amplitude");
  if (!(amplitude.lo > 0.0)) throw ConfigError("amplitudes must be positive");
  padding_s.check("padding_s");
  if (!(padding_s.lo >= 0.0)) throw ConfigError("padding must be non-negative");
  if (!(no_contact_duration_s > 0.0)) throw ConfigError("no-contact duration must be positive");
  tap_duration_s.check("tap_duration_s");
  if (tap_duration_s.lo < 0.15 || tap_duration_s.hi > 0.20)
    throw ConfigError("tap duration range must lie within [0.15, 0.20] s");
  tap_gap_s.check("tap_gap_s");
  if (taps_per_recording < 1) throw ConfigError("taps_per_recording must be >= 1");
  if (tap_amplitude) {
    tap_amplitude->check("tap_amplitude");
    if (!(tap_amplitude->lo > 0.0)) throw ConfigError("tap amplitudes must be positive");
  }
  contact_duration_s.check("contact_duration_s");
  if (!(contact_duration_s.hi > 0.6)) throw ConfigError("sustained contacts must be able to exceed 0.6 s");
  ramp_s.check("ramp_s");
  if (!(ramp_s.lo > 0.0) || ramp_s.hi * 2.0 > contact_duration_s.lo)
    throw ConfigError("contact ramps must be positive and fit inside the shortest contact");
  touch_tremor_hz.check("touch_tremor_hz");
  touch_tremor_depth.check("touch_tremor_depth");
  if (!(touch_off_axis_max >= 0.0 && touch_off_axis_max < 1.0)) throw ConfigError("touch_off_axis_max must be in [0, 1)");
  grab_ratio.check("grab_ratio");
  if (!(grab_ratio.lo > 0.0)) throw ConfigError("grab ratio must be positive");
  grab_waver_hz.check("grab_waver_hz");
  grab_waver_depth.check("grab_waver_depth");
  if (grab_waver_depth.hi >= 1.0) throw ConfigError("grab wavering depth must stay below 1");
  slip_band_hz.check("slip_band_hz");
  if (!(slip_band_hz.lo > 0.0) || slip_band_hz.hi >= rate_hz / 2.0) throw ConfigError("slip band must lie below Nyquist");
  slip_noise_level.check("slip_noise_level");
  slip_drift.check("slip_drift");
}

namespace {

nlohmann::json range_json(const Range& r) { return {r.lo, r.hi}; }

Range range_from(const nlohmann::json& j, const char* key, const Range& fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError(std::string("generator range '") + key + "' needs [lo, hi]");
  return {v[0], v[1]};
}

}  // namespace

nlohmann::json GestureParams::to_json() const {
  nlohmann::json j = {{"rate_hz", rate_hz},
                      {"noise_std", noise_std},
                      {"amplitude", range_json(amplitude)},
                      {"padding_s", range_json(padding_s)},
                      {"no_contact_duration_s", no_contact_duration_s},
                      {"tap_duration_s", range_json(tap_duration_s)},
                      {"tap_gap_s", range_json(tap_gap_s)},
                      {"taps_per_recording", taps_per_recording},
                      {"contact_duration_s", range_json(contact_duration_s)},
                      {"ramp_s", range_json(ramp_s)},
                      {"touch_tremor_hz", range_json(touch_tremor_hz)},
                      {"touch_tremor_depth", range_json(touch_tremor_depth)},
                      {"touch_off_axis_max", touch_off_axis_max},
                      {"grab_ratio", range_json(grab_ratio)},
                      {"grab_waver_hz", range_json(grab_waver_hz)},
                      {"grab_waver_depth", range_json(grab_waver_depth)},
                      {"slip_band_hz", range_json(slip_band_hz)},
                      {"slip_noise_level", range_json(slip_noise_level)},
                      {"slip_drift", range_json(slip_drift)}};
  j["tap_amplitude"] = tap_amplitude ? range_json(*tap_amplitude) : nlohmann::json(nullptr);
  return j;
}

GestureParams GestureParams::from_json(const nlohmann::json& j) {
  GestureParams p;
  p.rate_hz = j.value("rate_hz", p.rate_hz);
  p.noise_std = j.value("noise_std", p.noise_std);
  p.amplitude = range_from(j, "amplitude", p.amplitude);
  p.padding_s = range_from(j, "padding_s", p.padding_s);
  p.no_contact_duration_s = j.value("no_contact_duration_s", p.no_contact_duration_s);
  p.tap_duration_s = range_from(j, "tap_duration_s", p.tap_duration_s);
  p.tap_gap_s = range_from(j, "tap_gap_s", p.tap_gap_s);
  p.taps_per_recording = j.value("taps_per_recording", p.taps_per_recording);
  if (j.contains("tap_amplitude") && !j.at("tap_amplitude").is_null())
    p.tap_amplitude = range_from(j, "tap_amplitude", {});
  p.contact_duration_s = range_from(j, "contact_duration_s", p.contact_duration_s);
  p.ramp_s = range_from(j, "ramp_s", p.ramp_s);
  p.touch_tremor_hz = range_from(j, "touch_tremor_hz", p.touch_tremor_hz);
  p.touch_tremor_depth = range_from(j, "touch_tremor_depth", p.touch_tremor_depth);
  p.touch_off_axis_max = j.value("touch_off_axis_max", p.touch_off_axis_max);
  p.grab_ratio = range_from(j, "grab_ratio", p.grab_ratio);
  p.grab_waver_hz = range_from(j, "grab_waver_hz", p.grab_waver_hz);
  p.grab_waver_depth = range_from(j, "grab_waver_depth", p.grab_waver_depth);
  p.slip_band_hz = range_from(j, "slip_band_hz", p.slip_band_hz);
  p.slip_noise_level = range_from(j, "slip_noise_level", p.slip_noise_level);
  p.slip_drift = range_from(j, "slip_drift", p.slip_drift);
  return p;
}

GestureParams GestureParams::low_amplitude_taps() {
  GestureParams p;
  p.tap_amplitude = Range{0.3, 1.0};
  return p;
}

Recording generate_recording(GestureState state, const GestureParams& params, std::uint64_t seed, std::string id) {
  params.validate();
  std::mt19937_64 rng(seed);
  Builder b{params, rng, {}, {}};
  const double rate = params.rate_hz;
  if (state == GestureState::NoContact) {
    b.quiet(to_samples(params.no_contact_duration_s, rate));
  } else {
    b.quiet(to_samples(params.padding_s.sample(rng), rate));
    switch (state) {
      case GestureState::Tap:
        for (std::size_t i = 0; i < params.taps_per_recording; ++i) {
          if (i > 0) b.quiet(to_samples(params.tap_gap_s.sample(rng), rate));
          b.tap();
        }
        break;
      case GestureState::Touch: b.touch(); break;
      case GestureState::Grab: b.grab(); break;
      case GestureState::Slip: b.slip(); break;
      default: break;
    }
    b.quiet(to_samples(params.padding_s.sample(rng), rate));
  }

  Recording rec;
  rec.id = id.empty() ? std::string(to_string(state)) + "_" + std::to_string(seed) : std::move(id);
  rec.rate_hz = rate;
  rec.forces.resize(static_cast<Eigen::Index>(b.force.size()), 3);
  std::normal_distribution<double> noise(0.0, params.noise_std);
  for (std::size_t k = 0; k < b.force.size(); ++k)
    for (int c = 0; c < 3; ++c)
      rec.forces(static_cast<Eigen::Index>(k), c) = b.force[k](c) + (params.noise_std > 0.0 ? noise(rng) : 0.0);
  rec.labels = std::move(b.labels);
  return rec;
}

std::size_t eligible_snippets(const Recording& rec, GestureState state, const WindowConfig& window) {
  const std::size_t count = snippet_count(rec.size(), window.snippet_len, window.stride);
  std::size_t n = 0;
  for (std::size_t i = 0; i < count; ++i) n += rec.labels[i * window.stride + window.snippet_len / 2] == state;
  return n;
}

SyntheticDataset generate_dataset(const SplitCounts& counts, const GestureParams& params, std::uint64_t seed,
                                  const WindowConfig& window, std::uint64_t split_seed, double margin) {
  params.validate();
  window.validate(params.rate_hz);
  if (counts.train == 0 || counts.val == 0 || counts.test == 0) throw ConfigError("split counts must be positive");
  if (!(margin >= 1.0)) throw ConfigError("sizing margin must be >= 1");

  SyntheticDataset ds;
  std::array<std::size_t, kNumStates> made{};
  auto add = [&](GestureState s) {
    const auto o = static_cast<std::size_t>(ordinal(s));
    const std::uint64_t rs = mix_seed(seed ^ (0xD1B54A32D192ED03ULL * (o + 1)), made[o]);
    char id[64];
    std::snprintf(id, sizeof id, "%s_%03zu", std::string(to_string(s)).c_str(), made[o]);
    ++made[o];
    Recording rec = generate_recording(s, params, rs, id);
    ds.manifest.push_back({rec.id, s, rs, eligible_snippets(rec, s, window), "unused"});
    ds.recordings.push_back(std::move(rec));
  };

  const auto need = static_cast<std::size_t>(std::ceil(margin * static_cast<double>(counts.train + counts.val + counts.test)));
  for (GestureState s : kAllStates) {
    std::size_t have = 0;
    while (have < need) {
      add(s);
      have += ds.manifest.back().eligible_snippets;
      if (made[static_cast<std::size_t>(ordinal(s))] > 100000) throw ConfigError("generator yields no eligible snippets");
    }
  }

  // Whole-recording dealing can strand a split; top up the short class and retry.
  for (int attempt = 0;; ++attempt) {
    try {
      const DatasetSplit split = split_dataset(ds.recordings, window, counts, split_seed);
      std::map<std::string, std::string> tag;
      for (const auto& [id, name] : split.assignment) tag[id] = std::string(to_string(name));
      for (ManifestEntry& e : ds.manifest) {
        const auto it = tag.find(e.id);
        e.split = it == tag.end() ? "unused" : it->second;
      }
      return ds;
    } catch (const ShortageError& e) {
      if (attempt >= 64) throw;
      add(e.state());
      add(e.state());
    }
  }
}

void write_manifest_csv(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << "id,state,seed,eligible_snippets,split\n";
  for (const ManifestEntry& e : manifest)
    f << e.id << ',' << to_string(e.state) << ',' << e.seed << ',' << e.eligible_snippets << ',' << e.split << '\n';
}

std::vector<ManifestEntry> read_manifest_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open manifest " + path.string());
  std::string line;
  std::getline(f, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,state,seed,eligible_snippets,split") throw InputError("unexpected manifest header in " + path.string());
  std::vector<ManifestEntry> out;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 5) throw InputError("malformed manifest row: " + line);
    try {
      out.push_back({cols[0], parse_state(cols[1]), std::stoull(cols[2]), std::stoull(cols[3]), cols[4]});
    } catch (const std::logic_error&) {
      throw InputError("malformed manifest row: " + line);
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds) {
  std::filesystem::create_directories(dir);
  for (const Recording& r : ds.recordings) write_recording_csv(dir / (r.id + ".csv"), r);
  write_manifest_csv(dir / "manifest.csv", ds.manifest);
}

SyntheticDataset read_dataset(const std::filesystem::path& dir, double rate_hz) {
  SyntheticDataset ds;
  ds.manifest = read_manifest_csv(dir / "manifest.csv");
  for (const ManifestEntry& e : ds.manifest) ds.recordings.push_back(read_recording_csv(dir / (e.id + ".csv"), rate_hz));
  return ds;
}

}  // namespace tactile
