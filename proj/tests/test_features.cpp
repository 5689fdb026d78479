#include "support.hpp"
#include "tactile/features.hpp"

#include <doctest.h>

#include <sstream>

using namespace tactile;
namespace F = tactile::feature;

namespace {

const FeatureConfig kCfg{};

Eigen::MatrixX3d zeros(Eigen::Index n = 300) { return Eigen::MatrixX3d::Zero(n, 3); }

std::vector<double> windowed_diff(const std::vector<double>& x, std::size_t w) {
  std::vector<double> d;
  for (std::size_t n = 0; n + 2 * w < x.size(); ++n) d.push_back(x[n + 2 * w] - x[n]);
  return d;
}

std::vector<double> adjacent(const std::vector<double>& d) {
  std::vector<double> s;
  for (std::size_t m = 0; m + 1 < d.size(); ++m) s.push_back(d[m + 1] - d[m]);
  return s;
}

}  // namespace

TEST_CASE("extreme slopes") {
  CHECK(extreme_slopes(zeros(), kCfg) == std::pair<double, double>{0.0, 0.0});

  Eigen::MatrixX3d ramp = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) ramp(k, 1) = 0.1 * static_cast<double>(k);
  Eigen::MatrixX3d ramp_all = ramp;
  ramp_all.col(0) = ramp.col(1);
  ramp_all.col(2) = ramp.col(1);
  const auto [hi, lo] = extreme_slopes(ramp_all, kCfg);
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lo == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixX3d step = zeros();
  step.col(0).tail(150).setOnes();
  const auto [shi, slo] = extreme_slopes(step, kCfg);
  CHECK(shi == 1.0);
  CHECK(slo == 0.0);

  CHECK_THROWS_AS(extreme_slopes(zeros(10), kCfg), InputError);
}

TEST_CASE("extreme slopes match brute force over channels and positions") {
  oracle::Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixX3d s = oracle::random_snippet(rng);
    double hi = -1e300, lo = 1e300;
    for (Eigen::Index c = 0; c < 3; ++c)
      for (double v : windowed_diff(oracle::column(s, c), kCfg.half_window)) {
        hi = std::max(hi, v);
        lo = std::min(lo, v);
      }
    const auto [a, b] = extreme_slopes(s, kCfg);
    CHECK(a == hi);
    CHECK(b == lo);
  }
}

TEST_CASE("mean slope") {
  Eigen::MatrixX3d s = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) s(k, 0) = 3.0 * static_cast<double>(k + 1);
  const auto m = mean_slope(s);
  CHECK(m[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(m[1] == 0.0);
  CHECK(mean_slope(zeros()) == std::array<double, 3>{0, 0, 0});
}

TEST_CASE("high slope duration") {
  CHECK(high_slope_duration(zeros(), kCfg) == 0.0);

  // An 18-sample ramp on channel z: 9 full-span differences plus 4 partial
  // ones on each edge exceed the threshold.
  Eigen::MatrixX3d s = zeros();
  const double step = 0.1;  // 2w * step = 1.0 > 0.5
  for (Eigen::Index k = 0; k < 300; ++k) {
    const double kk = std::clamp(static_cast<double>(k) - 100.0, 0.0, 18.0);
    s(k, 2) = step * kk;
  }
  std::vector<double> d = windowed_diff(oracle::column(s, 2), kCfg.half_window);
  const std::size_t oracle_run = oracle::longest_run(d, kCfg.slope_threshold);
  CHECK(oracle_run == 17);
  CHECK(high_slope_duration(s, kCfg) == 17.0);

  Eigen::MatrixX3d steep = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) steep(k, 0) = static_cast<double>(k);
  CHECK(high_slope_duration(steep, kCfg) == 300.0 - 2.0 * static_cast<double>(kCfg.half_window));
}

TEST_CASE("second order features") {
  Eigen::MatrixX3d ramp = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) ramp.row(k).setConstant(0.3 * static_cast<double>(k));
  const auto r = second_order_features(ramp, kCfg);
  CHECK(std::abs(r[0]) < 1e-12);
  CHECK(std::abs(r[1]) < 1e-12);

  Eigen::MatrixX3d quad = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) quad.row(k).setConstant(static_cast<double>((k + 1) * (k + 1)));
  const auto q = second_order_features(quad, kCfg);
  const double expected = -4.0 * static_cast<double>(kCfg.half_window);
  CHECK(q[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("curvature slopes match a normal-equation fit of the d vectors") {
  oracle::Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixX3d s = oracle::random_snippet(rng);
    const auto f = second_order_features(s, kCfg);
    for (Eigen::Index c = 0; c < 3; ++c) {
      std::vector<double> d = windowed_diff(oracle::column(s, c), kCfg.half_window);
      for (double& v : d) v = -v;  // earlier minus later
      const auto coef = oracle::polyfit(oracle::index_axis(d.size()), d, 1);
      CHECK(oracle::relative_error(f[2 + static_cast<std::size_t>(c)], coef[1]) <= 1e-9);
    }
  }
}

TEST_CASE("high curvature duration") {
  CHECK(high_curvature_duration(zeros(), kCfg) == 0.0);
  Eigen::MatrixX3d ramp = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) ramp(k, 0) = 0.5 * static_cast<double>(k);
  CHECK(high_curvature_duration(ramp, kCfg) == 0.0);

  // Ramp into a plateau through one half-slope step: the slope change reaches
  // the full amount in exactly 9 consecutive second differences.
  Eigen::MatrixX3d tent = zeros();
  double level = 0.0;
  for (Eigen::Index k = 1; k < 300; ++k) {
    level += k <= 150 ? 0.3 : (k == 151 ? 0.15 : 0.0);
    tent(k, 1) = level;
  }
  const std::vector<double> s = adjacent(windowed_diff(oracle::column(tent, 1), kCfg.half_window));
  const std::size_t run = oracle::longest_run(s, kCfg.curvature_threshold);
  CHECK(run == 9);
  CHECK(high_curvature_duration(tent, kCfg) == static_cast<double>(run));
}

TEST_CASE("std feature") {
  CHECK(std_feature(zeros()) == 0.0);
  Eigen::MatrixX3d alt = zeros();
  for (Eigen::Index k = 0; k < 300; ++k) alt(k, 0) = k % 2 ? -1.0 : 1.0;
  CHECK(std_feature(alt) == doctest::Approx(std::sqrt(300.0 / 299.0) / 3.0).epsilon(1e-12));

  oracle::Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixX3d s = oracle::random_snippet(rng);
    long double acc = 0;
    for (Eigen::Index c = 0; c < 3; ++c) {
      long double mean = 0;
      for (Eigen::Index k = 0; k < 300; ++k) mean += s(k, c);
      mean /= 300;
      long double ss = 0;
      for (Eigen::Index k = 0; k < 300; ++k) ss += (s(k, c) - mean) * (s(k, c) - mean);
      acc += std::sqrt(ss / 299);
    }
    CHECK(oracle::relative_error(std_feature(s), static_cast<double>(acc / 3)) <= 1e-12);
  }
}

TEST_CASE("cubic fit") {
  Eigen::MatrixX3d s = zeros();
  for (Eigen::Index i = 0; i < 300; ++i) {
    const double k = static_cast<double>(i + 1);
    s(i, 0) = 2 * k * k * k - k * k + 5 * k + 7;
  }
  const auto c = cubic_fit(s);
  CHECK(c[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(c[1] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(c[2] == doctest::Approx(5.0).epsilon(1e-9));
  for (std::size_t i = 3; i < 9; ++i) CHECK(std::abs(c[i]) < 1e-9);
  for (double v : cubic_fit(zeros())) CHECK(v == 0.0);
}

TEST_CASE("template error") {
  const TapTemplate t = TapTemplate::raised_cosine();
  const Eigen::VectorXd& w = t.up;
  CHECK(t.length() == 160);
  CHECK(std::abs(w.mean()) < 1e-12);
  CHECK(w.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
  CHECK((t.up + t.down).cwiseAbs().maxCoeff() == 0.0);

  CHECK(template_error(3.0 * w, w) < 1e-12);
  // orthogonal: project a random vector off w
  oracle::Rng rng(2);
  Eigen::VectorXd x(160);
  for (Eigen::Index i = 0; i < 160; ++i) x(i) = oracle::gauss(rng);
  x -= (x.dot(w) / w.squaredNorm()) * w;
  CHECK(template_error(x, w) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(template_error(Eigen::VectorXd::Zero(160), w) == 1.0);
  CHECK_THROWS_AS(template_error(x, Eigen::VectorXd::Zero(160)), InputError);
  CHECK_THROWS_AS(template_error(x.head(10), w), InputError);

  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd noisy = w;
    for (Eigen::Index k = 0; k < 160; ++k) noisy(k) += oracle::gauss(rng, 0.05);
    const std::vector<double> xs(noisy.data(), noisy.data() + 160), ws(w.data(), w.data() + 160);
    CHECK(std::abs(template_error(noisy, w) - oracle::xi(xs, ws)) <= 1e-12);
  }
}

TEST_CASE("property: template error is scale invariant for positive scales and sign-mirrors the template") {
  const TapTemplate t = TapTemplate::raised_cosine();
  oracle::Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd x(160);
    for (Eigen::Index k = 0; k < 160; ++k) x(k) = oracle::gauss(rng) + 2.0 * t.up(k) * oracle::uniform(rng, -1, 1);
    const double c = std::exp(oracle::uniform(rng, -5.0, 5.0));
    const double base = template_error(x, t.up);
    CHECK(base >= 0.0);
    CHECK(std::abs(template_error(c * x, t.up) - base) <= 1e-12);
    // Negating the window swaps the roles of the up and down templates.
    CHECK(std::abs(template_error(-c * x, t.down) - base) <= 1e-12);
  }
}

TEST_CASE("tap features") {
  const TapTemplate t = TapTemplate::raised_cosine();
  Eigen::MatrixX3d s = zeros();
  s.col(1).segment(70, 160) = 4.0 * t.up;
  const auto f = tap_features(s, t);
  CHECK(f[0] < 1e-12);
  CHECK(f[1] >= f[0]);
  CHECK(f[3] >= f[2]);

  const auto z = tap_features(zeros(), t);
  for (double v : z) CHECK(v == 1.0);
  CHECK_THROWS_AS(tap_features(zeros(100), t), InputError);
}

TEST_CASE("constant snippet feature contract") {
  const TapTemplate t = TapTemplate::raised_cosine();
  for (double c : {0.0, 7.3, -12.0}) {
    const FeatureVector f = extract_manual_features(Eigen::MatrixX3d::Constant(300, 3, c), kCfg, t);
    for (std::size_t i = 0; i < 22; ++i) CHECK(std::abs(f[i]) < 1e-9);
    for (std::size_t i = F::kTapUpMin; i <= F::kTapDownMax; ++i) CHECK(f[i] == 1.0);
    for (std::size_t i = F::kRolloff; i < F::kCentroid + 3; ++i) CHECK(f[i] == 0.0);
    for (std::size_t i = F::kFlatness; i < kNumFeatures; ++i) CHECK(f[i] == 1.0);
  }
}

TEST_CASE("property: feature invariants on random snippets") {
  const TapTemplate t = TapTemplate::raised_cosine();
  oracle::Rng rng(23);
  for (int i = 0; i < 40; ++i) {
    const FeatureVector f = extract_manual_features(oracle::random_snippet(rng), kCfg, t);
    CHECK(f[F::kMaxSlope] >= f[F::kMinSlope]);
    CHECK(f[F::kTapUpMax] >= f[F::kTapUpMin]);
    CHECK(f[F::kTapDownMax] >= f[F::kTapDownMin]);
    for (std::size_t run : {F::kHighSlopeRun, F::kHighCurvatureRun}) {
      CHECK(f[run] >= 0.0);
      CHECK(f[run] == std::floor(f[run]));
      CHECK(f[run] <= 300.0 - 2.0 * static_cast<double>(kCfg.half_window));
    }
    CHECK(f[F::kStd] >= 0.0);
    for (std::size_t j = F::kTapUpMin; j <= F::kTapDownMax; ++j) CHECK(f[j] >= 0.0);
    for (double v : f.values) CHECK(std::isfinite(v));
  }
}

TEST_CASE("golden feature vector for a fixed seeded snippet") {
  oracle::Rng rng(20240601);
  const FeatureVector f = extract_manual_features(oracle::random_snippet(rng), kCfg, TapTemplate::raised_cosine());
  // Pinned after the oracle suites above passed.
  static const double golden[kNumFeatures] = {
#include "golden_features.inc"
  };
  for (std::size_t i = 0; i < kNumFeatures; ++i) CHECK(oracle::relative_error(f[i], golden[i], 1e-12) <= 1e-9);
}

TEST_CASE("normalizer") {
  oracle::Rng rng(4);
  Eigen::MatrixXd train(50, 4), test(20, 4);
  for (Eigen::Index i = 0; i < 50; ++i)
    train.row(i) << oracle::gauss(rng, 3) + 5, oracle::gauss(rng), 2.0, oracle::gauss(rng, 10);
  for (Eigen::Index i = 0; i < 20; ++i) test.row(i) << oracle::gauss(rng, 3) + 9, oracle::gauss(rng), 2.0, oracle::gauss(rng, 10);

  const Normalizer n = Normalizer::fit(train);
  const Eigen::MatrixXd z = n.apply(train);
  for (Eigen::Index j : {0, 1, 3}) {
    CHECK(std::abs(z.col(j).mean()) < 1e-9);
    const double sd = std::sqrt((z.col(j).array() - z.col(j).mean()).square().sum() / 49.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(z.col(2).cwiseAbs().maxCoeff() == 0.0);

  // Train statistics applied to test differ from self-normalized test data.
  const Eigen::MatrixXd leak_free = n.apply(test);
  const Eigen::MatrixXd self = Normalizer::fit(test).apply(test);
  CHECK(std::abs(leak_free.col(0).mean()) > 0.5);
  CHECK(std::abs(self.col(0).mean()) < 1e-9);

  CHECK_THROWS_AS(Normalizer::fit(Eigen::MatrixXd(0, 4)), InputError);
  CHECK_THROWS_AS(Normalizer().apply(train), StateError);
  CHECK_THROWS_AS(n.apply(Eigen::MatrixXd::Zero(3, 5)), InputError);
}

TEST_CASE("feature CSV header") {
  std::ostringstream os;
  write_feature_csv(os, Eigen::MatrixXd::Zero(1, kNumFeatures), {2});
  const std::string text = os.str();
  CHECK(text.rfind("f01,f02,", 0) == 0);
  CHECK(text.find("f41,label\n") != std::string::npos);
  CHECK(text.find(",touch\n") != std::string::npos);
  CHECK(F::column_name(0) == "f01");
  CHECK(!F::describe(40).empty());
}
