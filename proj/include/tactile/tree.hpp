#pragma once

#include "tactile/types.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace tactile {

struct TreeParams {
  std::optional<std::size_t> max_depth;  // nullopt = grow until pure
  std::size_t min_samples_leaf = 1;
  std::size_t min_samples_split = 2;
  std::uint64_t random_state = 0;  // accepted for interface parity; growth is deterministic

  void validate() const;
  nlohmann::json to_json() const;
  static TreeParams from_json(const nlohmann::json& j);
};

using ClassCounts = std::array<std::size_t, kNumStates>;

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] <= threshold go left
  int left = -1;
  int right = -1;
  std::size_t depth = 0;
  ClassCounts counts{};

  bool is_leaf() const noexcept { return feature < 0; }
  /// Majority class; ties go to the lowest ordinal.
  int majority() const noexcept;
};

struct DecisionTree {
  TreeParams params;
  Eigen::Index n_features = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  bool fitted() const noexcept { return !nodes.empty(); }
  std::size_t depth() const;
  std::size_t leaf_count() const;
  int predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);
};

/// Greedy CART growth with Gini impurity over midpoint thresholds. Ties in
/// impurity decrease resolve to the lowest feature index, then the lowest
/// threshold.
DecisionTree tree_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const TreeParams& params);

std::vector<int> tree_predict(const DecisionTree& tree, const Eigen::MatrixXd& X);

}  // namespace tactile
