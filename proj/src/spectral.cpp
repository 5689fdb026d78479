#include "tactile/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <ostream>
#include <vector>

namespace tactile {

namespace {
constexpr double kFlatnessEps = 1e-12;
}

void FeatureConfig::validate(std::size_t snippet_len) const {
  if (half_window < 1) throw ConfigError("half_window w must be >= 1");
  if (2 * half_window + 1 >= snippet_len)
    throw ConfigError("2w must be smaller than the snippet length minus one");
  if (!(slope_threshold > 0.0) || !(curvature_threshold > 0.0))
    throw ConfigError("run-length thresholds must be positive");
  if (!(rolloff_fraction > 0.0 && rolloff_fraction < 1.0))
    throw ConfigError("rolloff_fraction must lie in (0, 1)");
  if (stft_window < 2 || stft_hop < 1) throw ConfigError("invalid STFT window/hop");
  if (stft_window > snippet_len) throw ConfigError("STFT window longer than the snippet");
  if (!(rate_hz > 0.0)) throw ConfigError("rate_hz must be positive");
}

Eigen::VectorXd hann_window(std::size_t n) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k)
    w(static_cast<Eigen::Index>(k)) =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
  return w;
}

Spectrogram spectrogram(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg) {
  const auto len = static_cast<std::size_t>(snippet.rows());
  if (cfg.stft_window > len) throw ConfigError("STFT window longer than the snippet");
  if (cfg.stft_window < 2 || cfg.stft_hop < 1) throw ConfigError("invalid STFT window/hop");

  const std::size_t nwin = cfg.stft_window;
  const auto bins = static_cast<Eigen::Index>(nwin / 2 + 1);
  const auto slices = static_cast<Eigen::Index>((len - nwin) / cfg.stft_hop + 1);

  Spectrogram spec;
  spec.bin_freqs.resize(bins);
  for (Eigen::Index b = 0; b < bins; ++b)
    spec.bin_freqs(b) = static_cast<double>(b) * cfg.rate_hz / static_cast<double>(nwin);
  spec.slice_times.resize(slices);
  for (Eigen::Index s = 0; s < slices; ++s)
    spec.slice_times(s) =
        (static_cast<double>(s) * static_cast<double>(cfg.stft_hop) + static_cast<double>(nwin) / 2.0) /
        cfg.rate_hz;

  const Eigen::VectorXd window = hann_window(nwin);
  Eigen::FFT<double> fft;
  std::vector<double> frame(nwin);
  std::vector<std::complex<double>> out;

  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto col = snippet.col(static_cast<Eigen::Index>(c));
    const double mean = col.mean();
    Eigen::MatrixXd& mag = spec.magnitudes[c];
    mag.resize(bins, slices);
    for (Eigen::Index s = 0; s < slices; ++s) {
      const auto start = static_cast<Eigen::Index>(static_cast<std::size_t>(s) * cfg.stft_hop);
      for (std::size_t k = 0; k < nwin; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        frame[k] = (col(start + i) - mean) * window(i);
      }
      fft.fwd(out, frame);
      for (Eigen::Index b = 0; b < bins; ++b) mag(b, s) = std::abs(out[static_cast<std::size_t>(b)]);
    }
  }
  return spec;
}

SliceLine fit_slice_line(const Eigen::VectorXd& magnitudes, const Eigen::VectorXd& bin_freqs,
                         double db_floor) {
  const Eigen::Index n = magnitudes.size();
  if (n < 2 || bin_freqs.size() != n) throw InputError("slice profile needs >= 2 matching bins");
  Eigen::VectorXd db(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const double m = magnitudes(b);
    db(b) = m > 0.0 ? std::max(20.0 * std::log10(m), db_floor) : db_floor;
  }
  const double fmean = bin_freqs.mean();
  const double dmean = db.mean();
  const Eigen::VectorXd fc = bin_freqs.array() - fmean;
  const double sxx = fc.squaredNorm();
  SliceLine line;
  line.slope = sxx > 0.0 ? fc.dot(db.array().matrix() - Eigen::VectorXd::Constant(n, dmean)) / sxx : 0.0;
  line.offset = dmean - line.slope * fmean;
  return line;
}

std::array<double, 6> slice_linear_features(const Spectrogram& spec, double db_floor) {
  const Eigen::Index slices = spec.slices();
  if (slices < 1) throw InputError("spectrogram has no slices");
  double smax = -std::numeric_limits<double>::infinity(), smin = -smax, ssum = 0.0;
  double omax = smax, omin = smin, osum = 0.0;
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (Eigen::Index s = 0; s < slices; ++s) {
      const SliceLine l = fit_slice_line(spec.magnitudes[c].col(s), spec.bin_freqs, db_floor);
      smax = std::max(smax, l.slope);
      smin = std::min(smin, l.slope);
      ssum += l.slope;
      omax = std::max(omax, l.offset);
      omin = std::min(omin, l.offset);
      osum += l.offset;
    }
  }
  const double count = static_cast<double>(kChannels) * static_cast<double>(slices);
  return {smax, smin, ssum / count, omax, omin, osum / count};
}

double spectral_rolloff(const Eigen::VectorXd& magnitudes, const Eigen::VectorXd& bin_freqs,
                        double fraction) {
  const Eigen::VectorXd power = magnitudes.array().square();
  const double total = power.sum();
  if (!(total > 0.0)) return 0.0;
  const double target = fraction * total;
  double acc = 0.0;
  for (Eigen::Index b = 0; b < power.size(); ++b) {
    acc += power(b);
    if (acc >= target) return bin_freqs(b);
  }
  return bin_freqs(bin_freqs.size() - 1);
}

double spectral_centroid(const Eigen::VectorXd& magnitudes, const Eigen::VectorXd& bin_freqs) {
  const double total = magnitudes.sum();
  if (!(total > 0.0)) return 0.0;
  return magnitudes.dot(bin_freqs) / total;
}

double spectral_flatness(const Eigen::VectorXd& magnitudes) {
  const Eigen::ArrayXd power = magnitudes.array().square().max(kFlatnessEps);
  const double geometric = std::exp(power.log().mean());
  const double arithmetic = power.mean();
  return std::clamp(geometric / arithmetic, 0.0, 1.0);
}

std::array<double, 9> spectral_summary(const Spectrogram& spec, double rolloff_fraction) {
  const Eigen::Index slices = spec.slices();
  if (slices < 1) throw InputError("spectrogram has no slices");
  std::array<double, 9> out{};
  for (std::size_t c = 0; c < kChannels; ++c) {
    double r = 0.0, ce = 0.0, fl = 0.0;
    for (Eigen::Index s = 0; s < slices; ++s) {
      const Eigen::VectorXd m = spec.magnitudes[c].col(s);
      r += spectral_rolloff(m, spec.bin_freqs, rolloff_fraction);
      ce += spectral_centroid(m, spec.bin_freqs);
      fl += spectral_flatness(m);
    }
    const double n = static_cast<double>(slices);
    out[c] = r / n;
    out[3 + c] = ce / n;
    out[6 + c] = fl / n;
  }
  return out;
}

void write_spectrogram_csv(std::ostream& os, const Spectrogram& spec, std::size_t channel) {
  if (channel >= kChannels) throw InputError("channel index out of range");
  const Eigen::MatrixXd& m = spec.magnitudes[channel];
  os << "freq_hz";
  for (Eigen::Index s = 0; s < spec.slices(); ++s) os << ",t" << spec.slice_times(s);
  os << '\n';
  for (Eigen::Index b = 0; b < spec.bins(); ++b) {
    os << spec.bin_freqs(b);
    for (Eigen::Index s = 0; s < spec.slices(); ++s) os << ',' << m(b, s);
    os << '\n';
  }
}

}  // namespace tactile
