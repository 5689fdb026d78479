#pragma once

#include "tactile/feature_config.hpp"
#include "tactile/types.hpp"

#include <array>
#include <iosfwd>

namespace tactile {

/// One-sided magnitude STFT of each force channel.
struct Spectrogram {
  std::array<Eigen::MatrixXd, kChannels> magnitudes;  // bins x slices
  Eigen::VectorXd bin_freqs;                          // Hz
  Eigen::VectorXd slice_times;                        // s, window centers from snippet start

  Eigen::Index bins() const noexcept { return bin_freqs.size(); }
  Eigen::Index slices() const noexcept { return slice_times.size(); }
};

/// Periodic Hann window of length n.
Eigen::VectorXd hann_window(std::size_t n);

/// Hann-windowed STFT of the mean-removed channels: stft_window/2 + 1 bins and
/// floor((L - stft_window) / stft_hop) + 1 slices.
Spectrogram spectrogram(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg);

/// Least-squares line through a slice profile (dB, floored) against frequency.
struct SliceLine {
  double slope = 0.0;   // dB per Hz
  double offset = 0.0;  // dB at 0 Hz
};

SliceLine fit_slice_line(const Eigen::VectorXd& magnitudes, const Eigen::VectorXd& bin_freqs,
                         double db_floor);

/// f27..f32: max, min, mean of slice slopes, then max, min, mean of offsets, over
/// all channels and slices.
std::array<double, 6> slice_linear_features(const Spectrogram& spec, double db_floor = -120.0);

/// Per-slice descriptors. Zero spectra give rolloff 0, centroid 0, flatness 1.
double spectral_rolloff(const Eigen::VectorXd& magnitudes, const Eigen::VectorXd& bin_freqs,
                        double fraction);
double spectral_centroid(const Eigen::VectorXd& magnitudes, const Eigen::VectorXd& bin_freqs);
double spectral_flatness(const Eigen::VectorXd& magnitudes);

/// f33..f41: slice-averaged rolloff (x, y, z), centroid (x, y, z), flatness (x, y, z).
std::array<double, 9> spectral_summary(const Spectrogram& spec, double rolloff_fraction = 0.85);

/// Writes one channel as a bins x slices CSV with frequency row labels.
void write_spectrogram_csv(std::ostream& os, const Spectrogram& spec, std::size_t channel);

}  // namespace tactile
