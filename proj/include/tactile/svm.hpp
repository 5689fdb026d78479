#pragma once

#include "tactile/types.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace tactile {

enum class KernelType { Linear, Rbf, Poly, Sigmoid };
enum class DecisionShape { OneVsRest, OneVsOne };

std::string to_string(KernelType k);
KernelType parse_kernel(const std::string& s);
std::string to_string(DecisionShape s);
DecisionShape parse_decision_shape(const std::string& s);

/// Kernel coefficient: either the "scale" heuristic 1 / (d * Var(X)) or a fixed value.
struct Gamma {
  bool scale = true;
  double value = 0.0;

  static Gamma fixed(double v) { return {false, v}; }
  double resolve(const Eigen::MatrixXd& X) const;
  std::string str() const;
  static Gamma parse(const std::string& s);
};

struct SvmParams {
  double C = 1.0;
  KernelType kernel = KernelType::Rbf;
  Gamma gamma;
  DecisionShape shape = DecisionShape::OneVsRest;
  int degree = 3;
  double coef0 = 0.0;
  double tolerance = 1e-3;
  std::size_t max_iterations = 1'000'000;  // SMO pair updates per binary problem

  void validate() const;
  nlohmann::json to_json() const;
  static SvmParams from_json(const nlohmann::json& j);
};

/// Resolved kernel function.
struct Kernel {
  KernelType type = KernelType::Rbf;
  double gamma = 1.0;
  int degree = 3;
  double coef0 = 0.0;

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const;
  /// K(A_i, B_j) for all pairs.
  Eigen::MatrixXd gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;
};

/// One soft-margin binary machine: f(x) = sum_i coef_i K(sv_i, x) + bias,
/// with coef_i = alpha_i * y_i and y = +1 for `positive`.
struct BinarySvm {
  int positive = 0;
  int negative = -1;  // -1 = every other class
  std::vector<Eigen::Index> support;  // indices into the training rows
  Eigen::MatrixXd support_vectors;
  Eigen::VectorXd alpha;  // in [0, C]
  Eigen::VectorXd coef;
  double bias = 0.0;
  std::size_t iterations = 0;

  Eigen::VectorXd decision(const Kernel& k, const Eigen::MatrixXd& X) const;
};

struct SvmModel {
  SvmParams params;
  Kernel kernel;
  Eigen::Index n_features = 0;
  std::vector<int> classes;  // ascending
  std::vector<BinarySvm> machines;

  bool fitted() const noexcept { return !machines.empty(); }
  /// Columns follow `machines`.
  Eigen::MatrixXd decision_values(const Eigen::MatrixXd& X) const;

  nlohmann::json to_json() const;
  static SvmModel from_json(const nlohmann::json& j);
};

/// Optional precomputed training Gram matrix, reusable across C and decision shape.
using GramPtr = std::shared_ptr<const Eigen::MatrixXd>;

/// SMO with second-order working-set selection to a duality gap below the
/// tolerance. Two present classes give a single machine; otherwise the decision
/// shape picks one-vs-rest or one-vs-one. Throws ConvergenceError at the cap.
SvmModel svm_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const SvmParams& params,
                 GramPtr gram = nullptr);

/// One-vs-rest: argmax decision. One-vs-one: vote with ties to the lowest ordinal.
std::vector<int> svm_predict(const SvmModel& model, const Eigen::MatrixXd& X);

struct KktReport {
  bool box_ok = true;  // every alpha within [0, C] + 1e-9
  double worst_violation = 0.0;
  bool passed = false;
};

/// Recomputes the decision function on the training rows and checks the
/// complementary-slackness conditions of every machine.
KktReport kkt_audit(const SvmModel& model, const Eigen::MatrixXd& X, const std::vector<int>& y,
                    double tolerance = 1e-3);

}  // namespace tactile
