#include "tactile/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace tactile {

std::string to_string(KernelType k) {
  switch (k) {
    case KernelType::Linear: return "linear";
    case KernelType::Rbf: return "rbf";
    case KernelType::Poly: return "poly";
    case KernelType::Sigmoid: return "sigmoid";
  }
  return "?";
}

KernelType parse_kernel(const std::string& s) {
  if (s == "linear") return KernelType::Linear;
  if (s == "rbf") return KernelType::Rbf;
  if (s == "poly") return KernelType::Poly;
  if (s == "sigmoid") return KernelType::Sigmoid;
  throw ConfigError("unknown kernel '" + s + "'");
}

std::string to_string(DecisionShape s) { return s == DecisionShape::OneVsRest ? "ovr" : "ovo"; }

DecisionShape parse_decision_shape(const std::string& s) {
  if (s == "ovr") return DecisionShape::OneVsRest;
  if (s == "ovo") return DecisionShape::OneVsOne;
  throw ConfigError("unknown decision shape '" + s + "' (expected ovr or ovo)");
}

double Gamma::resolve(const Eigen::MatrixXd& X) const {
  if (!scale) return value;
  const double n = static_cast<double>(X.size());
  const double mean = X.sum() / n;
  const double var = (X.array() - mean).square().sum() / n;
  return var > 0.0 ? 1.0 / (static_cast<double>(X.cols()) * var) : 1.0;
}

std::string Gamma::str() const {
  if (scale) return "scale";
  std::ostringstream os;
  os << value;
  return os.str();
}

Gamma Gamma::parse(const std::string& s) {
  if (s == "scale") return {};
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("invalid gamma '" + s + "'");
  }
  if (used != s.size() || !(v > 0.0) || !std::isfinite(v)) throw ConfigError("invalid gamma '" + s + "'");
  return fixed(v);
}

void SvmParams::validate() const {
  if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("SVM C must be positive");
  if (!gamma.scale && !(gamma.value > 0.0)) throw ConfigError("SVM gamma must be positive");
  if (degree < 1) throw ConfigError("polynomial degree must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("SMO tolerance must be positive");
  if (max_iterations == 0) throw ConfigError("SMO iteration cap must be positive");
}

nlohmann::json SvmParams::to_json() const {
  return {{"C", C},           {"kernel", to_string(kernel)}, {"gamma", gamma.str()},
          {"shape", to_string(shape)}, {"degree", degree},   {"coef0", coef0},
          {"tolerance", tolerance},    {"max_iterations", max_iterations}};
}

SvmParams SvmParams::from_json(const nlohmann::json& j) {
  SvmParams p;
  p.C = j.value("C", p.C);
  p.kernel = parse_kernel(j.value("kernel", to_string(p.kernel)));
  p.gamma = Gamma::parse(j.value("gamma", p.gamma.str()));
  p.shape = parse_decision_shape(j.value("shape", to_string(p.shape)));
  p.degree = j.value("degree", p.degree);
  p.coef0 = j.value("coef0", p.coef0);
  p.tolerance = j.value("tolerance", p.tolerance);
  p.max_iterations = j.value("max_iterations", p.max_iterations);
  return p;
}

double Kernel::operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                          const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
  switch (type) {
    case KernelType::Linear: return a.dot(b);
    case KernelType::Rbf: return std::exp(-gamma * (a - b).squaredNorm());
    case KernelType::Poly: return std::pow(gamma * a.dot(b) + coef0, degree);
    case KernelType::Sigmoid: return std::tanh(gamma * a.dot(b) + coef0);
  }
  return 0.0;
}

Eigen::MatrixXd Kernel::gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd K = A * B.transpose();
  switch (type) {
    case KernelType::Linear: break;
    case KernelType::Rbf: {
      const Eigen::VectorXd na = A.rowwise().squaredNorm(), nb = B.rowwise().squaredNorm();
      for (Eigen::Index j = 0; j < K.cols(); ++j)
        for (Eigen::Index i = 0; i < K.rows(); ++i)
          K(i, j) = std::exp(-gamma * std::max(na(i) + nb(j) - 2.0 * K(i, j), 0.0));
      break;
    }
    case KernelType::Poly: K = (gamma * K.array() + coef0).pow(static_cast<double>(degree)).matrix(); break;
    case KernelType::Sigmoid: K = (gamma * K.array() + coef0).tanh().matrix(); break;
  }
  return K;
}

Eigen::VectorXd BinarySvm::decision(const Kernel& k, const Eigen::MatrixXd& X) const {
  return (k.gram(X, support_vectors) * coef).array() + bias;
}

namespace {

constexpr double kTau = 1e-12;

struct DualSolution {
  Eigen::VectorXd alpha;
  double bias = 0.0;
  std::size_t iterations = 0;
};

// Soft-margin dual: min 1/2 a'Qa - e'a, 0 <= a <= C, y'a = 0, Q_ij = y_i y_j K_ij.
DualSolution solve_smo(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double C, double eps,
                       std::size_t max_iter) {
  const Eigen::Index n = K.rows();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
  const Eigen::VectorXd diag = K.diagonal();
  std::size_t iter = 0;

  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      const bool up = y(t) > 0 ? alpha(t) < C : alpha(t) > 0.0;
      if (up && -y(t) * G(t) >= gmax) {
        gmax = -y(t) * G(t);
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    double obj_min = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    if (i >= 0) {
      const auto Ki = K.col(i);
      for (Eigen::Index t = 0; t < n; ++t) {
        const bool low = y(t) > 0 ? alpha(t) > 0.0 : alpha(t) < C;
        if (!low) continue;
        const double v = y(t) * G(t);
        gmax2 = std::max(gmax2, v);
        const double grad_diff = gmax + v;
        if (grad_diff > 0.0) {
          double quad = diag(i) + diag(t) - 2.0 * Ki(t);
          if (quad <= 0.0) quad = kTau;
          const double obj = -grad_diff * grad_diff / quad;
          if (obj <= obj_min) {
            obj_min = obj;
            j = t;
          }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < eps) break;
    if (++iter > max_iter)
      throw ConvergenceError("SMO did not reach the tolerance within the iteration cap", max_iter);

    const double old_i = alpha(i), old_j = alpha(j);
    const double yi = y(i), yj = y(j);
    const double Kij = K(i, j);
    if (yi != yj) {
      double quad = diag(i) + diag(j) - 2.0 * Kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0.0) {
        if (alpha(j) < 0.0) { alpha(j) = 0.0; alpha(i) = diff; }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0; alpha(j) = -diff;
      }
      if (diff > 0.0) {
        if (alpha(i) > C) { alpha(i) = C; alpha(j) = C - diff; }
      } else if (alpha(j) > C) {
        alpha(j) = C; alpha(i) = C + diff;
      }
    } else {
      double quad = diag(i) + diag(j) - 2.0 * Kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (G(i) - G(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > C) {
        if (alpha(i) > C) { alpha(i) = C; alpha(j) = sum - C; }
      } else if (alpha(j) < 0.0) {
        alpha(j) = 0.0; alpha(i) = sum;
      }
      if (sum > C) {
        if (alpha(j) > C) { alpha(j) = C; alpha(i) = sum - C; }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0; alpha(j) = sum;
      }
    }
    const double di = (alpha(i) - old_i) * yi, dj = (alpha(j) - old_j) * yj;
    // G_k += y_k (K_ki di + K_kj dj)
    G.array() += y.array() * (K.col(i).array() * di + K.col(j).array() * dj);
  }

  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y(t) * G(t);
    if (alpha(t) >= C) {
      if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0.0) {
      if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  const double rho = free > 0 ? sum_free / static_cast<double>(free) : (ub + lb) / 2.0;
  return {alpha, -rho, iter};
}

BinarySvm fit_machine(const Eigen::MatrixXd& X, const std::vector<int>& y, const std::vector<Eigen::Index>& rows,
                      int positive, int negative, const Eigen::MatrixXd& K_full, const SvmParams& p) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index b = 0; b < n; ++b)
    for (Eigen::Index a = 0; a < n; ++a) K(a, b) = K_full(rows[static_cast<std::size_t>(a)], rows[static_cast<std::size_t>(b)]);
  Eigen::VectorXd yy(n);
  for (Eigen::Index a = 0; a < n; ++a) yy(a) = y[static_cast<std::size_t>(rows[static_cast<std::size_t>(a)])] == positive ? 1.0 : -1.0;

  const DualSolution sol = solve_smo(K, yy, p.C, p.tolerance, p.max_iterations);
  BinarySvm m;
  m.positive = positive;
  m.negative = negative;
  m.bias = sol.bias;
  m.iterations = sol.iterations;
  for (Eigen::Index a = 0; a < n; ++a)
    if (sol.alpha(a) > 0.0) m.support.push_back(rows[static_cast<std::size_t>(a)]);
  const auto s = static_cast<Eigen::Index>(m.support.size());
  m.support_vectors.resize(s, X.cols());
  m.alpha.resize(s);
  m.coef.resize(s);
  Eigen::Index k = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    if (!(sol.alpha(a) > 0.0)) continue;
    m.support_vectors.row(k) = X.row(rows[static_cast<std::size_t>(a)]);
    m.alpha(k) = sol.alpha(a);
    m.coef(k) = sol.alpha(a) * yy(a);
    ++k;
  }
  return m;
}

// Training rows participating in a machine.
std::vector<Eigen::Index> machine_rows(const BinarySvm& m, const std::vector<int>& y) {
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < y.size(); ++r)
    if (m.negative < 0 || y[r] == m.positive || y[r] == m.negative) rows.push_back(static_cast<Eigen::Index>(r));
  return rows;
}

}  // namespace

SvmModel svm_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const SvmParams& params, GramPtr gram) {
  params.validate();
  if (X.rows() == 0 || X.cols() == 0) throw InputError("svm_fit: empty data");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw InputError("svm_fit: label count mismatch");
  if (!X.allFinite()) throw InputError("svm_fit: non-finite features");

  SvmModel model;
  model.params = params;
  model.n_features = X.cols();
  model.kernel = {params.kernel, params.gamma.resolve(X), params.degree, params.coef0};
  std::vector<int> classes(y);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw InputError("svm_fit needs at least two classes");
  model.classes = classes;

  if (gram && (gram->rows() != X.rows() || gram->cols() != X.rows()))
    throw InputError("svm_fit: precomputed Gram matrix has the wrong size");
  const GramPtr K = gram ? gram : std::make_shared<const Eigen::MatrixXd>(model.kernel.gram(X, X));

  std::vector<Eigen::Index> all(static_cast<std::size_t>(X.rows()));
  for (std::size_t r = 0; r < all.size(); ++r) all[r] = static_cast<Eigen::Index>(r);

  if (classes.size() == 2) {
    model.machines.push_back(fit_machine(X, y, all, classes[0], classes[1], *K, params));
  } else if (params.shape == DecisionShape::OneVsRest) {
    for (int c : classes) model.machines.push_back(fit_machine(X, y, all, c, -1, *K, params));
  } else {
    for (std::size_t a = 0; a < classes.size(); ++a)
      for (std::size_t b = a + 1; b < classes.size(); ++b) {
        BinarySvm probe;
        probe.positive = classes[a];
        probe.negative = classes[b];
        model.machines.push_back(fit_machine(X, y, machine_rows(probe, y), classes[a], classes[b], *K, params));
      }
  }
  return model;
}

Eigen::MatrixXd SvmModel::decision_values(const Eigen::MatrixXd& X) const {
  if (!fitted()) throw StateError("svm_predict on an unfitted model");
  if (X.cols() != n_features) throw InputError("svm_predict: feature width mismatch");
  Eigen::MatrixXd D(X.rows(), static_cast<Eigen::Index>(machines.size()));
  for (std::size_t m = 0; m < machines.size(); ++m) D.col(static_cast<Eigen::Index>(m)) = machines[m].decision(kernel, X);
  return D;
}

std::vector<int> svm_predict(const SvmModel& model, const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd D = model.decision_values(X);
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  const bool pairwise = model.machines.size() == 1 || model.machines.front().negative >= 0;
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    if (!pairwise) {
      Eigen::Index best = 0;
      for (Eigen::Index m = 1; m < D.cols(); ++m)
        if (D(r, m) > D(r, best)) best = m;
      out[static_cast<std::size_t>(r)] = model.machines[static_cast<std::size_t>(best)].positive;
      continue;
    }
    std::map<int, int> votes;
    for (std::size_t m = 0; m < model.machines.size(); ++m) {
      const BinarySvm& bm = model.machines[m];
      ++votes[D(r, static_cast<Eigen::Index>(m)) > 0.0 ? bm.positive : bm.negative];
    }
    int best = model.classes.front(), best_votes = -1;
    for (int c : model.classes)
      if (votes[c] > best_votes) {
        best_votes = votes[c];
        best = c;
      }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

KktReport kkt_audit(const SvmModel& model, const Eigen::MatrixXd& X, const std::vector<int>& y, double tolerance) {
  if (!model.fitted()) throw StateError("kkt_audit on an unfitted model");
  if (static_cast<std::size_t>(X.rows()) != y.size() || X.cols() != model.n_features)
    throw InputError("kkt_audit: training data shape mismatch");
  KktReport rep;
  const double C = model.params.C;
  for (const BinarySvm& m : model.machines) {
    std::map<Eigen::Index, double> alpha_of;
    for (std::size_t s = 0; s < m.support.size(); ++s) {
      const double a = m.alpha(static_cast<Eigen::Index>(s));
      if (a < -1e-9 || a > C + 1e-9) rep.box_ok = false;
      alpha_of[m.support[s]] = a;
    }
    const std::vector<Eigen::Index> rows = machine_rows(m, y);
    Eigen::MatrixXd Xm(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) Xm.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
    const Eigen::VectorXd f = m.decision(model.kernel, Xm);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double yr = y[static_cast<std::size_t>(rows[r])] == m.positive ? 1.0 : -1.0;
      const double margin = yr * f(static_cast<Eigen::Index>(r)) - 1.0;
      const auto it = alpha_of.find(rows[r]);
      const double a = it == alpha_of.end() ? 0.0 : it->second;
      double v = 0.0;
      if (a <= 0.0) v = std::max(0.0, -margin);
      else if (a >= C) v = std::max(0.0, margin);
      else v = std::abs(margin);
      rep.worst_violation = std::max(rep.worst_violation, v);
    }
  }
  rep.passed = rep.box_ok && rep.worst_violation <= tolerance;
  return rep;
}

nlohmann::json SvmModel::to_json() const {
  nlohmann::json ms = nlohmann::json::array();
  for (const BinarySvm& m : machines) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m.support_vectors;
    const std::vector<double> sv(rm.data(), rm.data() + rm.size());
    ms.push_back({{"positive", m.positive},
                  {"negative", m.negative},
                  {"support", m.support},
                  {"support_vectors", sv},
                  {"alpha", std::vector<double>(m.alpha.data(), m.alpha.data() + m.alpha.size())},
                  {"coef", std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size())},
                  {"bias", m.bias},
                  {"iterations", m.iterations}});
  }
  return {{"params", params.to_json()},
          {"kernel", {{"type", to_string(kernel.type)}, {"gamma", kernel.gamma}, {"degree", kernel.degree},
                      {"coef0", kernel.coef0}}},
          {"n_features", n_features},
          {"classes", classes},
          {"machines", ms}};
}

SvmModel SvmModel::from_json(const nlohmann::json& j) {
  SvmModel m;
  m.params = SvmParams::from_json(j.at("params"));
  const auto& k = j.at("kernel");
  m.kernel = {parse_kernel(k.at("type").get<std::string>()), k.at("gamma").get<double>(), k.at("degree").get<int>(),
              k.at("coef0").get<double>()};
  m.n_features = j.at("n_features").get<Eigen::Index>();
  m.classes = j.at("classes").get<std::vector<int>>();
  for (const auto& mj : j.at("machines")) {
    BinarySvm b;
    b.positive = mj.at("positive").get<int>();
    b.negative = mj.at("negative").get<int>();
    b.support = mj.at("support").get<std::vector<Eigen::Index>>();
    const auto sv = mj.at("support_vectors").get<std::vector<double>>();
    const auto alpha = mj.at("alpha").get<std::vector<double>>();
    const auto coef = mj.at("coef").get<std::vector<double>>();
    const auto s = static_cast<Eigen::Index>(coef.size());
    if (alpha.size() != coef.size() || sv.size() != coef.size() * static_cast<std::size_t>(m.n_features))
      throw InputError("SVM document has inconsistent support-vector blocks");
    b.support_vectors = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        sv.data(), s, m.n_features);
    b.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), s);
    b.coef = Eigen::Map<const Eigen::VectorXd>(coef.data(), s);
    b.bias = mj.at("bias").get<double>();
    b.iterations = mj.value("iterations", std::size_t{0});
    m.machines.push_back(std::move(b));
  }
  return m;
}

}  // namespace tactile
