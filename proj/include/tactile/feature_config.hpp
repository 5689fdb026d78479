#pragma once

#include <cstddef>

namespace tactile {

/// Parameters of the manual (time and frequency domain) feature extractor.
struct FeatureConfig {
  std::size_t half_window = 5;       // w: windowed differences span 2w samples
  double slope_threshold = 0.5;      // N, run-length threshold on |first differences|
  double curvature_threshold = 0.2;  // N, run-length threshold on |second differences|
  double rolloff_fraction = 0.85;
  std::size_t stft_window = 64;
  std::size_t stft_hop = 16;
  double rate_hz = 500.0;
  double db_floor = -120.0;

  /// Throws ConfigError on violated invariants; `snippet_len` bounds the window.
  void validate(std::size_t snippet_len) const;
};

}  // namespace tactile
