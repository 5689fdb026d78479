#pragma once

#include "tactile/feature_config.hpp"
#include "tactile/spectral.hpp"
#include "tactile/types.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <utility>

namespace tactile {

inline constexpr std::size_t kNumFeatures = 41;

/// Index map of the manual feature vector (0-based; f1 is index 0).
namespace feature {
inline constexpr std::size_t kMaxSlope = 0;           // f1
inline constexpr std::size_t kMinSlope = 1;           // f2
inline constexpr std::size_t kMeanSlope = 2;          // f3..f5 (x, y, z)
inline constexpr std::size_t kHighSlopeRun = 5;       // f6
inline constexpr std::size_t kMaxCurvature = 6;       // f7
inline constexpr std::size_t kMinCurvature = 7;       // f8
inline constexpr std::size_t kCurvatureSlope = 8;     // f9..f11 (x, y, z)
inline constexpr std::size_t kHighCurvatureRun = 11;  // f12
inline constexpr std::size_t kStd = 12;               // f13
inline constexpr std::size_t kCubic = 13;             // f14..f22 (x: c3 c2 c1, y: ..., z: ...)
inline constexpr std::size_t kTapUpMin = 22;          // f23
inline constexpr std::size_t kTapUpMax = 23;          // f24
inline constexpr std::size_t kTapDownMin = 24;        // f25
inline constexpr std::size_t kTapDownMax = 25;        // f26
inline constexpr std::size_t kSliceLine = 26;         // f27..f32
inline constexpr std::size_t kRolloff = 32;           // f33..f35 (x, y, z)
inline constexpr std::size_t kCentroid = 35;          // f36..f38
inline constexpr std::size_t kFlatness = 38;          // f39..f41

/// Short description for each index, e.g. "max windowed first difference".
std::string_view describe(std::size_t index);
/// Column header, "f01" .. "f41".
std::string column_name(std::size_t index);
}  // namespace feature

struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  bool normalized = false;

  double& operator[](std::size_t i) noexcept { return values[i]; }
  double operator[](std::size_t i) const noexcept { return values[i]; }
};

/// Up/down tap templates (zero mean, unit peak, down = -up).
struct TapTemplate {
  Eigen::VectorXd up;
  Eigen::VectorXd down;

  /// Raised-cosine pulse of `pulse_samples` centered in a `length`-sample window.
  static TapTemplate raised_cosine(std::size_t length = 160, std::size_t pulse_samples = 90);
  std::size_t length() const noexcept { return static_cast<std::size_t>(up.size()); }
};

// --- individual feature groups ------------------------------------------------

/// (f1, f2): extreme windowed first differences F[n+2w] - F[n] over all channels.
std::pair<double, double> extreme_slopes(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg);

/// (f3, f4, f5): least-squares slope per channel over sample index.
std::array<double, 3> mean_slope(const Eigen::MatrixX3d& snippet);

/// f6: longest run of |windowed first difference| > slope_threshold, max over channels.
double high_slope_duration(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg);

/// (f7 .. f11): extreme second differences of d = F[m] - F[m+2w], then the
/// least-squares slope of d per channel.
std::array<double, 5> second_order_features(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg);

/// f12: longest run of |second difference| > curvature_threshold, max over channels.
double high_curvature_duration(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg);

/// f13: mean over channels of the sample standard deviation.
double std_feature(const Eigen::MatrixX3d& snippet);

/// (f14 .. f22): cubic, quadratic and linear least-squares coefficients per
/// channel, sample index k = 1..L.
std::array<double, 9> cubic_fit(const Eigen::MatrixX3d& snippet);

/// Normalized correlation error of window `x` against template `w`.
/// Silent windows (sum x^2 == 0) score 1.
double template_error(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& w);

/// (f23 .. f26): min/max template error against the up template, then the down
/// template, over every channel and alignment. Each window is mean-removed.
std::array<double, 4> tap_features(const Eigen::MatrixX3d& snippet, const TapTemplate& templates);

/// All 41 features, unnormalized.
FeatureVector extract_manual_features(const Eigen::MatrixX3d& snippet, const FeatureConfig& cfg,
                                      const TapTemplate& templates);

/// Row-per-snippet feature matrix (n x 41).
Eigen::MatrixXd extract_feature_matrix(const SnippetSet& snippets, const FeatureConfig& cfg,
                                       const TapTemplate& templates);

// --- normalization -------------------------------------------------------------

/// Per-column z-score fitted on training rows. Columns with zero training
/// spread map to 0.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(Eigen::VectorXd mean, Eigen::VectorXd stddev);

  static Normalizer fit(const Eigen::MatrixXd& train);

  bool fitted() const noexcept { return fitted_; }
  Eigen::Index width() const noexcept { return mean_.size(); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::VectorXd& stddev() const noexcept { return stddev_; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  FeatureVector apply(const FeatureVector& f) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd stddev_;
  bool fitted_ = false;
};

Normalizer fit_normalizer(const Eigen::MatrixXd& train_features);
FeatureVector apply_normalizer(const Normalizer& nrm, const FeatureVector& f);

/// CSV with header f01..f41,label.
void write_feature_csv(std::ostream& os, const Eigen::MatrixXd& features, const std::vector<int>& labels);

}  // namespace tactile
