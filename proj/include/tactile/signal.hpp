#pragma once

#include "tactile/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace tactile {

struct WindowConfig {
  std::size_t snippet_len = 300;  // 600 ms at 500 Hz
  std::size_t stride = 50;        // 100 ms
  double filter_cutoff_hz = 50.0;
  int filter_order = 4;

  /// Throws ConfigError unless 0 < stride <= snippet_len and the cutoff is below
  /// the Nyquist frequency of `rate_hz`.
  void validate(double rate_hz = kDefaultRateHz) const;
};

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// One biquad section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Digital Butterworth low-pass as cascaded second-order sections (bilinear
/// transform with frequency pre-warping). Odd orders end with a first-order
/// section stored as a biquad with b2 = a2 = 0. Every section has unit DC gain.
std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double rate_hz);

/// Forward-backward (zero-phase) application of a section cascade with odd
/// reflection padding and steady-state initial conditions.
Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x);

/// Zero-phase Butterworth low-pass of every force channel. Labels pass through.
Recording lowpass_filter(const Recording& rec, const WindowConfig& cfg);

// ---------------------------------------------------------------------------
// Windowing and splitting
// ---------------------------------------------------------------------------

/// floor((n - len) / stride) + 1 for n >= len, else 0.
std::size_t snippet_count(std::size_t n, std::size_t snippet_len, std::size_t stride);

/// Overlapping windows labeled by their center sample (index offset + len/2).
SnippetSet make_snippets(const Recording& rec, const WindowConfig& cfg);

struct SplitCounts {
  std::size_t train = 319;
  std::size_t val = 46;
  std::size_t test = 27;
};

enum class SplitName : std::uint8_t { Train = 0, Val = 1, Test = 2 };
std::string_view to_string(SplitName s) noexcept;

/// Raised when a class cannot supply the requested number of snippets.
class ShortageError : public InputError {
 public:
  ShortageError(GestureState state, std::size_t needed, std::size_t available,
                std::string_view split);
  GestureState state() const noexcept { return state_; }

 private:
  GestureState state_;
};

struct DatasetSplit {
  SnippetSet train;
  SnippetSet val;
  SnippetSet test;
  /// Recording id -> split it was assigned to (recordings that contributed nothing
  /// are absent).
  std::vector<std::pair<std::string, SplitName>> assignment;
};

/// Leakage-free per-class split.
///
/// Each recording is owned by its primary state (Recording::primary_state) and is
/// eligible to contribute only snippets carrying that label. For every state, the
/// owned recordings are shuffled with `seed` and dealt whole to the test, then
/// validation, then training split until each split can supply its quota; the
/// quota is then drawn by a seeded shuffle inside the split. All snippets of a
/// recording therefore land in one split.
DatasetSplit split_dataset(const std::vector<Recording>& filtered_recordings,
                           const WindowConfig& cfg, const SplitCounts& counts,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Recording CSV: header `t,fx,fy,fz,label`
// ---------------------------------------------------------------------------

void write_recording_csv(std::ostream& os, const Recording& rec);
void write_recording_csv(const std::filesystem::path& path, const Recording& rec);

/// Parses a recording; the sampling rate is inferred from timestamps and must
/// match `expected_rate_hz` within 0.5 %, otherwise InputError (no resampling).
Recording read_recording_csv(std::istream& is, std::string id,
                             double expected_rate_hz = kDefaultRateHz);
Recording read_recording_csv(const std::filesystem::path& path,
                             double expected_rate_hz = kDefaultRateHz);

}  // namespace tactile
