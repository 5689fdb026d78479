#pragma once

#include "tactile/types.hpp"

#include <cstdint>
#include <variant>

namespace tactile {

struct PcaModel {
  Eigen::VectorXd mean;                     // d
  Eigen::MatrixXd components;               // k x d, orthonormal rows
  Eigen::VectorXd explained_variance_ratio;  // k, non-increasing

  Eigen::Index k() const noexcept { return components.rows(); }
  Eigen::Index input_width() const noexcept { return mean.size(); }
  /// Maps projected rows back to the input space.
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& projected) const;
};

/// Either a fixed component count or the smallest count reaching a fraction of
/// the training variance.
struct PcaTarget {
  std::size_t components = 15;
  double variance = 0.0;  // in (0, 1] selects variance mode

  static PcaTarget fixed(std::size_t k) { return {k, 0.0}; }
  static PcaTarget variance_fraction(double v) { return {0, v}; }
};

/// Eigendecomposition of the training covariance (divisor n - 1). Component
/// signs are fixed so the largest-magnitude loading of each row is positive.
PcaModel pca_fit(const Eigen::MatrixXd& x, PcaTarget target = {});

struct IcaConfig {
  std::size_t components = 15;
  double tolerance = 1e-6;
  std::size_t max_iterations = 500;
  std::uint64_t seed = 0;
};

struct IcaModel {
  Eigen::VectorXd mean;       // d
  Eigen::MatrixXd whitening;  // k x d
  Eigen::MatrixXd rotation;   // k x k, orthonormal rows found by FastICA
  Eigen::MatrixXd unmixing;   // k x d = rotation * whitening

  Eigen::Index k() const noexcept { return unmixing.rows(); }
  Eigen::Index input_width() const noexcept { return mean.size(); }
};

/// Whitening followed by deflationary FastICA with the logcosh contrast.
/// Throws ConvergenceError if any component exceeds max_iterations.
IcaModel ica_fit(const Eigen::MatrixXd& x, const IcaConfig& cfg = {});

Eigen::MatrixXd project(const PcaModel& model, const Eigen::MatrixXd& x);
Eigen::MatrixXd project(const IcaModel& model, const Eigen::MatrixXd& x);

}  // namespace tactile
