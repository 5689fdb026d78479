#pragma once

#include "tactile/signal.hpp"
#include "tactile/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tactile {

/// Closed interval sampled uniformly; lo < hi is required.
struct Range {
  double lo = 0.0;
  double hi = 1.0;

  double sample(std::mt19937_64& rng) const { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  void check(const char* name) const;
};

struct GestureParams {
  double rate_hz = kDefaultRateHz;
  double noise_std = 0.05;  // N, every channel, every sample
  Range amplitude{1.0, 15.0};
  Range padding_s{0.4, 0.8};  // no-contact lead-in and tail around events
  double no_contact_duration_s = 3.0;

  Range tap_duration_s{0.15, 0.20};
  Range tap_gap_s{1.0, 1.6};  // quiet time between consecutive taps
  std::size_t taps_per_recording = 8;
  std::optional<Range> tap_amplitude;  // overrides `amplitude` for taps

  Range contact_duration_s{1.5, 3.0};
  Range ramp_s{0.05, 0.10};  // onset/offset of sustained contact

  Range touch_tremor_hz{8.0, 12.0};
  Range touch_tremor_depth{0.02, 0.06};
  double touch_off_axis_max = 0.15;

  Range grab_ratio{0.7, 1.0};  // secondary / primary axis amplitude
  Range grab_waver_hz{0.5, 3.0};
  Range grab_waver_depth{0.2, 0.4};

  Range slip_band_hz{20.0, 60.0};
  Range slip_noise_level{0.08, 0.20};  // RMS relative to contact amplitude
  Range slip_drift{0.2, 0.5};          // amplitude change over the contact

  void validate() const;
  nlohmann::json to_json() const;
  static GestureParams from_json(const nlohmann::json& j);

  /// Taps at 0.3-1.0 N: a weak-tap stress variant.
  static GestureParams low_amplitude_taps();
};

/// One recording whose contact events all belong to `state` (NoContact gives
/// pure sensor noise), padded with no-contact segments.
Recording generate_recording(GestureState state, const GestureParams& params, std::uint64_t seed,
                             std::string id = {});

struct ManifestEntry {
  std::string id;
  GestureState state = GestureState::NoContact;
  std::uint64_t seed = 0;
  std::size_t eligible_snippets = 0;
  std::string split;  // train | val | test | unused
};

struct SyntheticDataset {
  std::vector<Recording> recordings;
  std::vector<ManifestEntry> manifest;
};

/// Class-balanced recordings sized so split_dataset(recordings, window,
/// counts, split_seed) succeeds; the manifest records the resulting split of
/// every recording.
SyntheticDataset generate_dataset(const SplitCounts& counts, const GestureParams& params, std::uint64_t seed,
                                  const WindowConfig& window, std::uint64_t split_seed, double margin = 1.2);

/// Snippets of `rec` whose center label equals `state`.
std::size_t eligible_snippets(const Recording& rec, GestureState state, const WindowConfig& window);

void write_manifest_csv(const std::filesystem::path& path, const std::vector<ManifestEntry>& manifest);
std::vector<ManifestEntry> read_manifest_csv(const std::filesystem::path& path);

/// `<dir>/<id>.csv` per recording plus `<dir>/manifest.csv`.
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds);
/// Loads the recordings listed in `<dir>/manifest.csv`.
SyntheticDataset read_dataset(const std::filesystem::path& dir, double rate_hz = kDefaultRateHz);

}  // namespace tactile
