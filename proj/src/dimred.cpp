#include "tactile/dimred.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace tactile {

namespace {

struct Eigensystem {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns, matching order
};

Eigensystem sorted_covariance_eigensystem(const Eigen::MatrixXd& centered) {
  const double denom = static_cast<double>(centered.rows() - 1);
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw InputError("covariance eigendecomposition failed");
  const Eigen::Index d = cov.rows();
  Eigensystem es;
  es.values = solver.eigenvalues().reverse().cwiseMax(0.0);
  es.vectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    es.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (es.vectors(arg, j) < 0.0) es.vectors.col(j) *= -1.0;
  }
  return es;
}

void check_width(Eigen::Index expected, const Eigen::MatrixXd& x) {
  if (x.cols() != expected)
    throw InputError("projection expects " + std::to_string(expected) + " columns, got " +
                     std::to_string(x.cols()));
}

}  // namespace

PcaModel pca_fit(const Eigen::MatrixXd& x, PcaTarget target) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (d < 1) throw InputError("pca_fit: no features");
  const bool variance_mode = target.variance > 0.0;
  if (variance_mode && target.variance > 1.0) throw ConfigError("variance target must lie in (0, 1]");
  if (!variance_mode && target.components < 1) throw ConfigError("pca_fit: k must be >= 1");
  if (!variance_mode && static_cast<Eigen::Index>(target.components) > d)
    throw ConfigError("pca_fit: k exceeds the feature width");
  if (n < 2 || (!variance_mode && n <= static_cast<Eigen::Index>(target.components)))
    throw InputError("pca_fit: need more rows than components");

  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  const Eigensystem es = sorted_covariance_eigensystem(centered);
  const double total = es.values.sum();

  Eigen::Index k = static_cast<Eigen::Index>(target.components);
  if (variance_mode) {
    k = d;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      acc += es.values(j);
      if (total > 0.0 && acc / total >= target.variance - 1e-12) {
        k = j + 1;
        break;
      }
    }
    if (n <= k) throw InputError("pca_fit: need more rows than components");
  }
  m.components = es.vectors.leftCols(k).transpose();
  m.explained_variance_ratio =
      total > 0.0 ? Eigen::VectorXd(es.values.head(k) / total) : Eigen::VectorXd::Zero(k);
  return m;
}

Eigen::MatrixXd PcaModel::reconstruct(const Eigen::MatrixXd& projected) const {
  if (projected.cols() != k()) throw InputError("reconstruct: width mismatch");
  return (projected * components).rowwise() + mean.transpose();
}

Eigen::MatrixXd project(const PcaModel& model, const Eigen::MatrixXd& x) {
  if (model.components.size() == 0) throw StateError("PCA model is not fitted");
  check_width(model.input_width(), x);
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

// ---------------------------------------------------------------------------

IcaModel ica_fit(const Eigen::MatrixXd& x, const IcaConfig& cfg) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const auto k = static_cast<Eigen::Index>(cfg.components);
  if (k < 1) throw ConfigError("ica_fit: k must be >= 1");
  if (k > d) throw ConfigError("ica_fit: k exceeds the feature width");
  if (n <= k) throw InputError("ica_fit: need more rows than components");

  IcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  const Eigensystem es = sorted_covariance_eigensystem(centered);
  const double top = es.values(0);
  for (Eigen::Index j = 0; j < k; ++j)
    if (!(es.values(j) > 1e-12 * std::max(top, 1e-300)))
      throw InputError("ica_fit: training data has rank below the requested component count");

  m.whitening.resize(k, d);
  for (Eigen::Index j = 0; j < k; ++j)
    m.whitening.row(j) = es.vectors.col(j).transpose() / std::sqrt(es.values(j));
  const Eigen::MatrixXd z = centered * m.whitening.transpose();  // n x k, identity covariance

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  m.rotation.resize(k, k);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (Eigen::Index p = 0; p < k; ++p) {
    Eigen::VectorXd w(k);
    for (Eigen::Index i = 0; i < k; ++i) w(i) = normal(rng);
    auto decorrelate = [&](Eigen::VectorXd& v) {
      for (Eigen::Index q = 0; q < p; ++q) v -= v.dot(m.rotation.row(q).transpose()) * m.rotation.row(q).transpose();
      v.normalize();
    };
    decorrelate(w);

    bool converged = false;
    std::size_t it = 0;
    while (it < cfg.max_iterations) {
      ++it;
      const Eigen::VectorXd proj = z * w;
      const Eigen::ArrayXd g = proj.array().tanh();
      const double gprime = (1.0 - g.square()).mean();
      Eigen::VectorXd next = (z.transpose() * g.matrix()) * inv_n - gprime * w;
      decorrelate(next);
      const double change = std::abs(std::abs(next.dot(w)) - 1.0);
      w = next;
      if (change < cfg.tolerance) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw ConvergenceError("FastICA component " + std::to_string(p) + " did not converge", it);
    Eigen::Index arg = 0;
    w.cwiseAbs().maxCoeff(&arg);
    if (w(arg) < 0.0) w = -w;
    m.rotation.row(p) = w.transpose();
  }
  m.unmixing = m.rotation * m.whitening;
  return m;
}

Eigen::MatrixXd project(const IcaModel& model, const Eigen::MatrixXd& x) {
  if (model.unmixing.size() == 0) throw StateError("ICA model is not fitted");
  check_width(model.input_width(), x);
  return (x.rowwise() - model.mean.transpose()) * model.unmixing.transpose();
}

}  // namespace tactile
