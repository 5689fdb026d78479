#include "tactile/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace tactile {

void WindowConfig::validate(double rate_hz) const {
  if (snippet_len == 0) throw ConfigError("snippet_len must be positive");
  if (stride == 0 || stride > snippet_len)
    throw ConfigError("stride must satisfy 0 < stride <= snippet_len");
  if (!(rate_hz > 0.0)) throw ConfigError("sampling rate must be positive");
  if (!(filter_cutoff_hz > 0.0) || filter_cutoff_hz >= rate_hz / 2.0)
    throw ConfigError("filter cutoff must lie in (0, Nyquist)");
  if (filter_order < 1) throw ConfigError("filter order must be >= 1");
}

// ---------------------------------------------------------------------------

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
  if (order < 1) throw ConfigError("filter order must be >= 1");
  if (!(rate_hz > 0.0) || !(cutoff_hz > 0.0) || cutoff_hz >= rate_hz / 2.0)
    throw ConfigError("filter cutoff must lie in (0, Nyquist)");

  using cd = std::complex<double>;
  const double fs2 = 2.0 * rate_hz;
  const double warped = fs2 * std::tan(std::numbers::pi * cutoff_hz / rate_hz);
  auto digital_pole = [&](int k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    const cd s = warped * std::polar(1.0, theta);
    return (fs2 + s) / (fs2 - s);
  };

  std::vector<Biquad> sections;
  for (int k = 0; k < order / 2; ++k) {
    const cd z = digital_pole(k);
    Biquad q;
    q.a1 = -2.0 * z.real();
    q.a2 = std::norm(z);
    const double g = (1.0 + q.a1 + q.a2) / 4.0;
    q.b0 = g;
    q.b1 = 2.0 * g;
    q.b2 = g;
    sections.push_back(q);
  }
  if (order % 2 == 1) {
    const cd z = digital_pole(order / 2);  // real pole
    Biquad q;
    q.a1 = -z.real();
    q.a2 = 0.0;
    const double g = (1.0 + q.a1) / 2.0;
    q.b0 = g;
    q.b1 = g;
    q.b2 = 0.0;
    sections.push_back(q);
  }
  return sections;
}

namespace {

// Transposed direct form II, started in the steady state of a constant input
// `level` (valid because each section has unit DC gain).
void filter_in_place(const std::vector<Biquad>& sections, std::vector<double>& x) {
  if (x.empty()) return;
  for (const Biquad& q : sections) {
    const double level = x.front();
    double z2 = (q.b2 - q.a2) * level;
    double z1 = (q.b1 - q.a1) * level + z2;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

}  // namespace

Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  if (n == 0) throw InputError("cannot filter an empty signal");

  std::size_t first_order = 0;
  for (const Biquad& q : sections)
    if (q.b2 == 0.0 && q.a2 == 0.0) ++first_order;
  const std::size_t default_pad = 3 * (2 * sections.size() + 1 - first_order);
  const std::size_t pad = std::min(default_pad, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x(0) - x(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 0; i < n; ++i) ext.push_back(x(static_cast<Eigen::Index>(i)));
  for (std::size_t i = 1; i <= pad; ++i)
    ext.push_back(2.0 * x(static_cast<Eigen::Index>(n - 1)) - x(static_cast<Eigen::Index>(n - 1 - i)));

  filter_in_place(sections, ext);
  std::reverse(ext.begin(), ext.end());
  filter_in_place(sections, ext);
  std::reverse(ext.begin(), ext.end());

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = ext[pad + i];
  return y;
}

Recording lowpass_filter(const Recording& rec, const WindowConfig& cfg) {
  if (rec.size() == 0) throw InputError("cannot filter an empty recording '" + rec.id + "'");
  cfg.validate(rec.rate_hz);
  const auto sections = butterworth_lowpass(cfg.filter_order, cfg.filter_cutoff_hz, rec.rate_hz);
  Recording out = rec;
  for (Eigen::Index c = 0; c < 3; ++c) out.forces.col(c) = filtfilt(sections, rec.forces.col(c));
  return out;
}

// ---------------------------------------------------------------------------

std::size_t snippet_count(std::size_t n, std::size_t snippet_len, std::size_t stride) {
  if (stride == 0) throw ConfigError("stride must be positive");
  if (n < snippet_len || snippet_len == 0) return 0;
  return (n - snippet_len) / stride + 1;
}

SnippetSet make_snippets(const Recording& rec, const WindowConfig& cfg) {
  cfg.validate(rec.rate_hz);
  const std::size_t count = snippet_count(rec.size(), cfg.snippet_len, cfg.stride);
  SnippetSet out;
  out.reserve(count);
  const auto len = static_cast<Eigen::Index>(cfg.snippet_len);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t offset = s * cfg.stride;
    Snippet snip;
    snip.data = rec.forces.middleRows(static_cast<Eigen::Index>(offset), len);
    snip.label = rec.labels[offset + cfg.snippet_len / 2];
    snip.source_id = rec.id;
    snip.offset = offset;
    out.push_back(std::move(snip));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(SplitName s) noexcept {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::Test: return "test";
  }
  return "?";
}

ShortageError::ShortageError(GestureState state, std::size_t needed, std::size_t available,
                             std::string_view split)
    : InputError("insufficient '" + std::string(to_string(state)) + "' snippets for " +
                 std::string(split) + " split: need " + std::to_string(needed) + ", have " +
                 std::to_string(available)),
      state_(state) {}

DatasetSplit split_dataset(const std::vector<Recording>& recordings, const WindowConfig& cfg,
                           const SplitCounts& counts, std::uint64_t seed) {
  struct Pool {
    std::size_t recording;
    std::vector<Snippet> eligible;
  };
  std::array<std::vector<Pool>, kNumStates> by_state;
  for (std::size_t r = 0; r < recordings.size(); ++r) {
    const Recording& rec = recordings[r];
    const GestureState owner = rec.primary_state();
    Pool pool{r, {}};
    for (Snippet& s : make_snippets(rec, cfg))
      if (s.label == owner) pool.eligible.push_back(std::move(s));
    if (!pool.eligible.empty()) by_state[static_cast<std::size_t>(ordinal(owner))].push_back(std::move(pool));
  }

  DatasetSplit result;
  const std::array<std::pair<SplitName, std::size_t>, 3> order = {
      std::pair{SplitName::Test, counts.test}, std::pair{SplitName::Val, counts.val},
      std::pair{SplitName::Train, counts.train}};
  auto target = [&](SplitName n) -> SnippetSet& {
    switch (n) {
      case SplitName::Train: return result.train;
      case SplitName::Val: return result.val;
      default: return result.test;
    }
  };

  for (GestureState state : kAllStates) {
    auto& pools = by_state[static_cast<std::size_t>(ordinal(state))];
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(ordinal(state)) + 1)));
    std::shuffle(pools.begin(), pools.end(), rng);

    std::size_t cursor = 0;
    for (const auto& [split, quota] : order) {
      std::vector<Snippet> gathered;
      while (gathered.size() < quota && cursor < pools.size()) {
        Pool& p = pools[cursor++];
        result.assignment.emplace_back(recordings[p.recording].id, split);
        for (Snippet& s : p.eligible) gathered.push_back(std::move(s));
      }
      if (gathered.size() < quota)
        throw ShortageError(state, quota, gathered.size(), to_string(split));
      std::shuffle(gathered.begin(), gathered.end(), rng);
      gathered.resize(quota);
      // Stable presentation order inside a split.
      std::sort(gathered.begin(), gathered.end(), [](const Snippet& a, const Snippet& b) {
        return std::tie(a.source_id, a.offset) < std::tie(b.source_id, b.offset);
      });
      SnippetSet& dst = target(split);
      for (Snippet& s : gathered) dst.push_back(std::move(s));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

void write_recording_csv(std::ostream& os, const Recording& rec) {
  rec.validate();
  os << "t,fx,fy,fz,label\n";
  char line[160];
  for (std::size_t k = 0; k < rec.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f,", rec.time_at(k), rec.forces(i, 0),
                  rec.forces(i, 1), rec.forces(i, 2));
    os << line << to_string(rec.labels[k]) << '\n';
  }
}

void write_recording_csv(const std::filesystem::path& path, const Recording& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
  write_recording_csv(os, rec);
}

Recording read_recording_csv(std::istream& is, std::string id, double expected_rate_hz) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("recording '" + id + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,fx,fy,fz,label")
    throw InputError("recording '" + id + "': expected header 't,fx,fy,fz,label'");

  std::vector<double> t;
  std::vector<std::array<double, 3>> f;
  std::vector<GestureState> labels;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 5> cells;
    std::size_t field = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= cells.size())
          throw InputError("recording '" + id + "' row " + std::to_string(row) + ": too many fields");
        cells[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != cells.size())
      throw InputError("recording '" + id + "' row " + std::to_string(row) + ": expected 5 fields");
    try {
      t.push_back(std::stod(cells[0]));
      f.push_back({std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])});
    } catch (const std::exception&) {
      throw InputError("recording '" + id + "' row " + std::to_string(row) + ": bad number");
    }
    labels.push_back(parse_state(cells[4]));
  }
  if (t.empty()) throw InputError("recording '" + id + "': no samples");

  Recording rec;
  rec.id = std::move(id);
  rec.t0 = t.front();
  rec.labels = std::move(labels);
  rec.forces.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t k = 0; k < f.size(); ++k)
    for (int c = 0; c < 3; ++c) rec.forces(static_cast<Eigen::Index>(k), c) = f[k][static_cast<std::size_t>(c)];

  for (std::size_t k = 1; k < t.size(); ++k)
    if (!(t[k] > t[k - 1]))
      throw InputError("recording '" + rec.id + "': timestamps not strictly increasing at row " +
                       std::to_string(k + 2));
  rec.rate_hz = expected_rate_hz;
  if (t.size() > 1) {
    const double rate = static_cast<double>(t.size() - 1) / (t.back() - t.front());
    if (std::abs(rate - expected_rate_hz) > 0.005 * expected_rate_hz) {
      std::ostringstream msg;
      msg << "recording '" << rec.id << "': sampling rate " << std::setprecision(6) << rate
          << " Hz does not match required " << expected_rate_hz << " Hz";
      throw InputError(msg.str());
    }
  }
  rec.validate();
  return rec;
}

Recording read_recording_csv(const std::filesystem::path& path, double expected_rate_hz) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open '" + path.string() + "'");
  return read_recording_csv(is, path.stem().string(), expected_rate_hz);
}

}  // namespace tactile
