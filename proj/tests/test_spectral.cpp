#include "support.hpp"
#include "tactile/spectral.hpp"

#include <doctest.h>

#include <sstream>

using namespace tactile;

namespace {

const FeatureConfig kCfg{};

Eigen::MatrixX3d tone(double hz, double amp = 1.0, Eigen::Index n = 300) {
  Eigen::MatrixX3d s(n, 3);
  for (Eigen::Index k = 0; k < n; ++k)
    s.row(k).setConstant(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(k) / 500.0));
  return s;
}

}  // namespace

TEST_CASE("spectrogram shape follows the closed form") {
  const Spectrogram s = spectrogram(tone(50.0), kCfg);
  CHECK(s.bins() == 33);
  CHECK(s.slices() == 15);
  for (std::size_t c = 0; c < kChannels; ++c) {
    CHECK(s.magnitudes[c].rows() == 33);
    CHECK(s.magnitudes[c].cols() == 15);
    CHECK(s.magnitudes[c].minCoeff() >= 0.0);
  }
  oracle::Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    FeatureConfig c = kCfg;
    c.stft_window = 4 + 2 * (rng() % 40);
    c.stft_hop = 1 + rng() % 40;
    const Eigen::Index len = static_cast<Eigen::Index>(c.stft_window + rng() % 300);
    const Spectrogram sp = spectrogram(Eigen::MatrixX3d::Zero(len, 3), c);
    CHECK(sp.bins() == static_cast<Eigen::Index>(c.stft_window / 2 + 1));
    CHECK(sp.slices() == static_cast<Eigen::Index>((static_cast<std::size_t>(len) - c.stft_window) / c.stft_hop + 1));
  }
  FeatureConfig big = kCfg;
  big.stft_window = 400;
  CHECK_THROWS_AS(spectrogram(tone(50.0), big), ConfigError);
}

TEST_CASE("spectrogram matches a direct DFT") {
  oracle::Rng rng(9);
  const Eigen::MatrixX3d x = oracle::random_snippet(rng);
  const Spectrogram s = spectrogram(x, kCfg);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const auto ref = oracle::stft(oracle::column(x, c), kCfg.stft_window, kCfg.stft_hop);
    REQUIRE(static_cast<Eigen::Index>(ref.size()) == s.slices());
    for (Eigen::Index sl = 0; sl < s.slices(); ++sl)
      for (Eigen::Index b = 0; b < s.bins(); ++b)
        CHECK(std::abs(s.magnitudes[static_cast<std::size_t>(c)](b, sl) - ref[static_cast<std::size_t>(sl)][static_cast<std::size_t>(b)]) <=
              1e-9 * (1.0 + ref[static_cast<std::size_t>(sl)][static_cast<std::size_t>(b)]));
  }
}

TEST_CASE("50 Hz tone peaks at the nearest bin") {
  const Spectrogram s = spectrogram(tone(50.0), kCfg);
  Eigen::Index nearest = 0;
  (s.bin_freqs.array() - 50.0).abs().minCoeff(&nearest);
  for (Eigen::Index sl = 0; sl < s.slices(); ++sl) {
    Eigen::Index arg = 0;
    s.magnitudes[0].col(sl).maxCoeff(&arg);
    CHECK(arg == nearest);
  }
}

TEST_CASE("spectrogram is zero for zero input and linear in amplitude") {
  const Spectrogram z = spectrogram(Eigen::MatrixX3d::Zero(300, 3), kCfg);
  for (const auto& m : z.magnitudes) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
  const Spectrogram a = spectrogram(tone(37.0), kCfg), b = spectrogram(tone(37.0, 2.0), kCfg);
  for (std::size_t c = 0; c < 3; ++c) CHECK((b.magnitudes[c] - 2.0 * a.magnitudes[c]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("slice line fits") {
  const Eigen::VectorXd freqs = Eigen::VectorXd::LinSpaced(33, 0.0, 250.0);
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(33, 10.0);  // 20 dB
  const SliceLine l = fit_slice_line(flat, freqs, -120.0);
  CHECK(std::abs(l.slope) < 1e-12);
  CHECK(l.offset == doctest::Approx(20.0));

  oracle::Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd m(33);
    std::vector<double> fx(33), db(33);
    for (Eigen::Index b = 0; b < 33; ++b) {
      m(b) = std::exp(oracle::gauss(rng, 2.0));
      fx[static_cast<std::size_t>(b)] = freqs(b);
      db[static_cast<std::size_t>(b)] = 20.0 * std::log10(m(b));
    }
    const SliceLine fit = fit_slice_line(m, freqs, -120.0);
    const auto coef = oracle::polyfit(fx, db, 1);
    CHECK(oracle::relative_error(fit.slope, coef[1]) <= 1e-9);
    CHECK(oracle::relative_error(fit.offset, coef[0]) <= 1e-9);
  }
  Eigen::VectorXd with_zero = flat;
  with_zero(3) = 0.0;
  const SliceLine floored = fit_slice_line(with_zero, freqs, -120.0);
  CHECK(std::isfinite(floored.slope));
}

TEST_CASE("low-frequency contact has a negative mean slice slope") {
  oracle::Rng rng(4);
  Eigen::MatrixX3d s(300, 3);
  for (Eigen::Index k = 0; k < 300; ++k)
    for (Eigen::Index c = 0; c < 3; ++c)
      s(k, c) = 5.0 + 0.3 * std::sin(2.0 * std::numbers::pi * 10.0 * static_cast<double>(k) / 500.0) +
                0.5 * std::sin(2.0 * std::numbers::pi * 2.0 * static_cast<double>(k) / 500.0) + oracle::gauss(rng, 0.01);
  const auto f = slice_linear_features(spectrogram(s, kCfg));
  CHECK(f[2] < 0.0);
  CHECK(f[0] >= f[2]);
  CHECK(f[1] <= f[2]);
}

TEST_CASE("spectral descriptors") {
  const Eigen::VectorXd freqs = Eigen::VectorXd::LinSpaced(33, 0.0, 250.0);
  Eigen::VectorXd single = Eigen::VectorXd::Zero(33);
  single(5) = 3.0;
  CHECK(spectral_rolloff(single, freqs, 0.85) == freqs(5));
  CHECK(spectral_centroid(single, freqs) == doctest::Approx(freqs(5)));
  CHECK(spectral_flatness(single) < 1e-6);

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(33);
  CHECK(spectral_rolloff(zero, freqs, 0.85) == 0.0);
  CHECK(spectral_centroid(zero, freqs) == 0.0);
  CHECK(spectral_flatness(zero) == 1.0);
  CHECK(spectral_flatness(Eigen::VectorXd::Constant(33, 2.0)) == doctest::Approx(1.0));

  const Spectrogram s = spectrogram(tone(50.0), kCfg);
  const auto sum = spectral_summary(s);
  const double bin_width = 500.0 / 64.0;
  CHECK(std::abs(sum[3] - 50.0) <= bin_width);
  CHECK(sum[6] < 0.1);
}

TEST_CASE("white noise is spectrally flat") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::Rng rng(seed);
    Eigen::MatrixX3d s(300, 3);
    for (Eigen::Index k = 0; k < 300; ++k)
      for (Eigen::Index c = 0; c < 3; ++c) s(k, c) = oracle::gauss(rng);
    total += spectral_summary(spectrogram(s, kCfg))[6];
  }
  CHECK(total / 100.0 > 0.5);
}

TEST_CASE("property: descriptor ranges on random snippets") {
  oracle::Rng rng(33);
  for (int t = 0; t < 50; ++t) {
    const auto f = spectral_summary(spectrogram(oracle::random_snippet(rng), kCfg));
    for (int c = 0; c < 3; ++c) {
      CHECK(f[static_cast<std::size_t>(c)] >= 0.0);
      CHECK(f[static_cast<std::size_t>(c)] <= 250.0);
      CHECK(f[static_cast<std::size_t>(3 + c)] >= 0.0);
      CHECK(f[static_cast<std::size_t>(3 + c)] <= 250.0);
      CHECK(f[static_cast<std::size_t>(6 + c)] >= 0.0);
      CHECK(f[static_cast<std::size_t>(6 + c)] <= 1.0);
    }
  }
}

TEST_CASE("spectrogram CSV dump") {
  std::ostringstream os;
  const Spectrogram s = spectrogram(tone(50.0), kCfg);
  write_spectrogram_csv(os, s, 0);
  const std::string text = os.str();
  CHECK(text.rfind("freq_hz,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 34);
  CHECK_THROWS_AS(write_spectrogram_csv(os, s, 3), InputError);
}
