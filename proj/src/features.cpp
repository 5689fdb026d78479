#include "tactile/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

namespace tactile {

namespace feature {

std::string_view describe(std::size_t index) {
  static constexpr std::array<std::string_view, kNumFeatures> kNames = {
      "max windowed first difference",
      "min windowed first difference",
      "least-squares slope x",
      "least-squares slope y",
      "least-squares slope z",
      "longest high-slope run",
      "max second difference",
      "min second difference",
      "slope of first differences x",
      "slope of first differences y",
      "slope of first differences z",
      "longest high-curvature run",
      "mean channel standard deviation",
      "cubic coefficient x",
      "quadratic coefficient x",
      "linear coefficient x",
      "cubic coefficient y",
      "quadratic coefficient y",
      "linear coefficient y",
      "cubic coefficient z",
      "quadratic coefficient z",
      "linear coefficient z",
      "min tap error (up template)",
      "max tap error (up template)",
      "min tap error (down template)",
      "max tap error (down template)",
      "max spectrogram slice slope",
      "min spectrogram slice slope",
      "mean spectrogram slice slope",
      "max spectrogram slice offset",
      "min spectrogram slice offset",
      "mean spectrogram slice offset",
      "spectral rolloff x",
      "spectral rolloff y",
      "spectral rolloff z",
      "spectral centroid x",
      "spectral centroid y",
      "spectral centroid z",
      "spectral flatness x",
      "spectral flatness y",
      "spectral flatness z",
  };
  if (index >= kNumFeatures) throw InputError("feature index out of range");
  return kNames[index];
}

std::string column_name(std::size_t index) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "f%02zu", index + 1);
  return buf;
}

}  // namespace feature

namespace {

void require_length(const Eigen::MatrixX3d& snippet, std::size_t min_len, const char* what) {
  if (static_cast<std::size_t>(snippet.rows()) < min_len)
    throw InputError(std::string(what) + ": snippet needs at least " + std::to_string(min_len) +
                     " samples, got " + std::to_string(snippet.rows()));
}

// Slope of the least-squares line through (k, v_k), k = 0..n-1.
double index_slope(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = static_cast<double>(v.size());
  const double kbar = (n - 1.0) / 2.0;
  const double vbar = v.mean();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) acc += (static_cast<double>(k) - kbar) * (v(k) - vbar);
  return 12.0 * acc / (n * n * n - n);
}

std::size_t longest_run_above(const Eigen::Ref<const Eigen::VectorXd>& v, double threshold) {
  std::size_t best = 0, run = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    run = std::abs(v(i)) > threshold ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

// Windowed first differences F[n+2w] - F[n] for one channel (length L - 2w).
Eigen::VectorXd forward_differences(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t w) {
  const auto span = static_cast<Eigen::Index>(2 * w);
  const Eigen::Index n = x.size() - span;
  return x.segment(span, n) - x.head(n);
}

// d = F[m] - F[m+2w], the earlier-minus-later orientation of the curvature vector.
Eigen::VectorXd curvature_base(const Eigen::Ref<const Eigen::VectorXd>& x, std::size_t w) {
  return -forward_differences(x, w);
}

Eigen::VectorXd adjacent_differences(const Eigen::VectorXd& d) {
  return d.tail(d.size() - 1) - d.head(d.size() - 1);
}

}  // namespace

std::pair<double, double> extreme_slopes(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg) {
  require_length(snippet, 2 * cfg.half_window + 1, "extreme_slopes");
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::VectorXd d = forward_differences(snippet.col(c), cfg.half_window);
    hi = std::max(hi, d.maxCoeff());
    lo = std::min(lo, d.minCoeff());
  }
  return {hi, lo};
}

std::array<double, 3> mean_slope(const Eigen::MatrixX3d& snippet) {
  require_length(snippet, 2, "mean_slope");
  return {index_slope(snippet.col(0)), index_slope(snippet.col(1)), index_slope(snippet.col(2))};
}

double high_slope_duration(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg) {
  require_length(snippet, 2 * cfg.half_window + 1, "high_slope_duration");
  std::size_t best = 0;
  for (Eigen::Index c = 0; c < 3; ++c)
    best = std::max(best, longest_run_above(forward_differences(snippet.col(c), cfg.half_window),
                                            cfg.slope_threshold));
  return static_cast<double>(best);
}

std::array<double, 5> second_order_features(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg) {
  require_length(snippet, 2 * cfg.half_window + 2, "second_order_features");
  std::array<double, 5> out{};
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::VectorXd d = curvature_base(snippet.col(c), cfg.half_window);
    const Eigen::VectorXd s = adjacent_differences(d);
    hi = std::max(hi, s.maxCoeff());
    lo = std::min(lo, s.minCoeff());
    // Least-squares slope of d over its index; the normalizer is n^3 - n with
    // n = L - 2w, the value a direct normal-equation solve produces.
    out[2 + static_cast<std::size_t>(c)] = d.size() >= 2 ? index_slope(d) : 0.0;
  }
  out[0] = hi;
  out[1] = lo;
  return out;
}

double high_curvature_duration(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg) {
  require_length(snippet, 2 * cfg.half_window + 2, "high_curvature_duration");
  std::size_t best = 0;
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::VectorXd s = adjacent_differences(curvature_base(snippet.col(c), cfg.half_window));
    best = std::max(best, longest_run_above(s, cfg.curvature_threshold));
  }
  return static_cast<double>(best);
}

double std_feature(const Eigen::MatrixX3d& snippet) {
  require_length(snippet, 2, "std_feature");
  const double n = static_cast<double>(snippet.rows());
  double acc = 0.0;
  for (Eigen::Index c = 0; c < 3; ++c) {
    const auto col = snippet.col(c);
    acc += std::sqrt((col.array() - col.mean()).square().sum() / (n - 1.0));
  }
  return acc / 3.0;
}

std::array<double, 9> cubic_fit(const Eigen::MatrixX3d& snippet) {
  require_length(snippet, 4, "cubic_fit");
  const Eigen::Index len = snippet.rows();
  // Fit in u = (k - c) / s for conditioning, then expand back to powers of k.
  const double c = (static_cast<double>(len) + 1.0) / 2.0;
  const double s = std::max((static_cast<double>(len) - 1.0) / 2.0, 1.0);
  Eigen::MatrixXd vander(len, 4);
  for (Eigen::Index k = 0; k < len; ++k) {
    const double u = (static_cast<double>(k + 1) - c) / s;
    vander(k, 0) = 1.0;
    vander(k, 1) = u;
    vander(k, 2) = u * u;
    vander(k, 3) = u * u * u;
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(vander);

  std::array<double, 9> out{};
  for (Eigen::Index ch = 0; ch < 3; ++ch) {
    const Eigen::VectorXd y = snippet.col(ch).array() - snippet.col(ch).mean();
    const Eigen::Vector4d beta = qr.solve(y);
    // sum_j beta_j (k - c)^j / s^j  ->  coefficients of k^3, k^2, k^1.
    const double b1 = beta(1) / s, b2 = beta(2) / (s * s), b3 = beta(3) / (s * s * s);
    const double cubic = b3;
    const double quadratic = b2 - 3.0 * b3 * c;
    const double linear = b1 - 2.0 * b2 * c + 3.0 * b3 * c * c;
    const auto base = static_cast<std::size_t>(3 * ch);
    out[base] = cubic;
    out[base + 1] = quadratic;
    out[base + 2] = linear;
  }
  return out;
}

// ---------------------------------------------------------------------------

TapTemplate TapTemplate::raised_cosine(std::size_t length, std::size_t pulse_samples) {
  if (length < 2 || pulse_samples < 2 || pulse_samples > length)
    throw ConfigError("tap template needs 2 <= pulse_samples <= length");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(length));
  const std::size_t start = (length - pulse_samples) / 2;
  for (std::size_t k = 0; k < pulse_samples; ++k) {
    const double phase = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.5) /
                         static_cast<double>(pulse_samples);
    w(static_cast<Eigen::Index>(start + k)) = 0.5 * (1.0 - std::cos(phase));
  }
  w.array() -= w.mean();
  w /= w.cwiseAbs().maxCoeff();
  TapTemplate t;
  t.up = w;
  t.down = -w;
  return t;
}

double template_error(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (x.size() != w.size()) throw InputError("template_error: window and template lengths differ");
  const double ww = w.squaredNorm();
  if (!(ww > 0.0)) throw InputError("template_error: zero template");
  const double xx = x.squaredNorm();
  if (!(xx > 0.0)) return 1.0;
  const double scale = std::abs(x.dot(w) / ww);
  const double err = (x - scale * w).squaredNorm();
  return err / xx;
}

std::array<double, 4> tap_features(const Eigen::MatrixX3d& snippet, const TapTemplate& templates) {
  const auto tlen = static_cast<Eigen::Index>(templates.length());
  if (tlen == 0 || templates.down.size() != tlen) throw InputError("tap_features: invalid templates");
  if (snippet.rows() < tlen) throw InputError("tap_features: snippet shorter than the template");

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<double, 4> out = {inf, -inf, inf, -inf};
  Eigen::VectorXd window(tlen);
  for (Eigen::Index c = 0; c < 3; ++c) {
    for (Eigen::Index a = 0; a + tlen <= snippet.rows(); ++a) {
      window = snippet.col(c).segment(a, tlen);
      window.array() -= window.mean();
      const double up = template_error(window, templates.up);
      const double down = template_error(window, templates.down);
      out[0] = std::min(out[0], up);
      out[1] = std::max(out[1], up);
      out[2] = std::min(out[2], down);
      out[3] = std::max(out[3], down);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureVector extract_manual_features(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg,
                                      const TapTemplate& templates) {
  cfg.validate(static_cast<std::size_t>(snippet.rows()));
  if (!snippet.allFinite()) throw InputError("snippet contains non-finite values");

  // Every feature is offset-invariant by construction; removing the channel
  // means first keeps rounding identical when an offset is present.
  Eigen::MatrixX3d x = snippet;
  x.rowwise() -= x.colwise().mean();

  FeatureVector f;
  using namespace feature;
  const auto [hi, lo] = extreme_slopes(x, cfg);
  f[kMaxSlope] = hi;
  f[kMinSlope] = lo;
  const auto slopes = mean_slope(x);
  std::copy(slopes.begin(), slopes.end(), f.values.begin() + kMeanSlope);
  f[kHighSlopeRun] = high_slope_duration(x, cfg);
  const auto second = second_order_features(x, cfg);
  f[kMaxCurvature] = second[0];
  f[kMinCurvature] = second[1];
  std::copy(second.begin() + 2, second.end(), f.values.begin() + kCurvatureSlope);
  f[kHighCurvatureRun] = high_curvature_duration(x, cfg);
  f[kStd] = std_feature(x);
  const auto cubic = cubic_fit(x);
  std::copy(cubic.begin(), cubic.end(), f.values.begin() + kCubic);
  const auto tap = tap_features(x, templates);
  std::copy(tap.begin(), tap.end(), f.values.begin() + kTapUpMin);

  const Spectrogram spec = spectrogram(x, cfg);
  const auto lines = slice_linear_features(spec, cfg.db_floor);
  std::copy(lines.begin(), lines.end(), f.values.begin() + kSliceLine);
  const auto summary = spectral_summary(spec, cfg.rolloff_fraction);
  std::copy(summary.begin(), summary.end(), f.values.begin() + kRolloff);
  return f;
}

Eigen::MatrixXd extract_feature_matrix(const SnippetSet& snippets, const FeatureConfig& cfg,
                                       const TapTemplate& templates) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(snippets.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    const FeatureVector f = extract_manual_features(snippets[i].data, cfg, templates);
    for (std::size_t j = 0; j < kNumFeatures; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
  }
  return out;
}

// ---------------------------------------------------------------------------

Normalizer::Normalizer(Eigen::VectorXd mean, Eigen::VectorXd stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)), fitted_(true) {
  if (mean_.size() != stddev_.size()) throw InputError("normalizer mean/std width mismatch");
  if ((stddev_.array() < 0.0).any()) throw InputError("normalizer std must be non-negative");
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& train) {
  if (train.rows() == 0) throw InputError("cannot fit a normalizer on an empty training set");
  const Eigen::VectorXd mean = train.colwise().mean().transpose();
  Eigen::VectorXd sd(train.cols());
  const double denom = train.rows() > 1 ? static_cast<double>(train.rows() - 1) : 1.0;
  for (Eigen::Index j = 0; j < train.cols(); ++j)
    sd(j) = std::sqrt((train.col(j).array() - mean(j)).square().sum() / denom);
  return Normalizer(mean, sd);
}

Eigen::MatrixXd Normalizer::apply(const Eigen::MatrixXd& x) const {
  if (!fitted_) throw StateError("normalizer used before fit");
  if (x.cols() != mean_.size())
    throw InputError("normalizer width " + std::to_string(mean_.size()) + " does not match input width " +
                     std::to_string(x.cols()));
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (stddev_(j) > 0.0)
      out.col(j) = (x.col(j).array() - mean_(j)) / stddev_(j);
    else
      out.col(j).setZero();
  }
  return out;
}

FeatureVector Normalizer::apply(const FeatureVector& f) const {
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t j = 0; j < kNumFeatures; ++j) row(0, static_cast<Eigen::Index>(j)) = f[j];
  const Eigen::MatrixXd z = apply(row);
  FeatureVector out;
  for (std::size_t j = 0; j < kNumFeatures; ++j) out[j] = z(0, static_cast<Eigen::Index>(j));
  out.normalized = true;
  return out;
}

Normalizer fit_normalizer(const Eigen::MatrixXd& train_features) { return Normalizer::fit(train_features); }

FeatureVector apply_normalizer(const Normalizer& nrm, const FeatureVector& f) { return nrm.apply(f); }

void write_feature_csv(std::ostream& os, const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw InputError("feature rows and labels differ in count");
  for (Eigen::Index j = 0; j < features.cols(); ++j) os << feature::column_name(static_cast<std::size_t>(j)) << ',';
  os << "label\n";
  char buf[32];
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", features(i, j));
      os << buf << ',';
    }
    os << to_string(state_from_ordinal(labels[static_cast<std::size_t>(i)])) << '\n';
  }
}

}  // namespace tactile
