#include "tactile/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tactile {

void TreeParams::validate() const {
  if (max_depth && *max_depth == 0) throw ConfigError("max_depth must be >= 1 or unlimited");
  if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
}

nlohmann::json TreeParams::to_json() const {
  nlohmann::json j = {{"min_samples_leaf", min_samples_leaf},
                      {"min_samples_split", min_samples_split},
                      {"random_state", random_state}};
  j["max_depth"] = max_depth ? nlohmann::json(*max_depth) : nlohmann::json(nullptr);
  return j;
}

TreeParams TreeParams::from_json(const nlohmann::json& j) {
  TreeParams p;
  if (j.contains("max_depth") && !j.at("max_depth").is_null()) p.max_depth = j.at("max_depth").get<std::size_t>();
  p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
  p.min_samples_split = j.value("min_samples_split", p.min_samples_split);
  p.random_state = j.value("random_state", p.random_state);
  return p;
}

int TreeNode::majority() const noexcept {
  int best = 0;
  for (int c = 1; c < static_cast<int>(kNumStates); ++c)
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
  return best;
}

std::size_t DecisionTree::depth() const {
  std::size_t d = 0;
  for (const TreeNode& n : nodes) d = std::max(d, n.depth);
  return d;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int DecisionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (!fitted()) throw StateError("tree_predict on an unfitted tree");
  if (x.size() != n_features) throw InputError("tree_predict: feature width mismatch");
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf())
    node = &nodes[static_cast<std::size_t>(x(node->feature) <= node->threshold ? node->left : node->right)];
  return node->majority();
}

namespace {

double sum_sq_over_n(const ClassCounts& c, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t v : c) s += static_cast<double>(v) * static_cast<double>(v);
  return s / static_cast<double>(n);
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();
};

class Builder {
 public:
  Builder(const Eigen::MatrixXd& X, const std::vector<int>& y, const TreeParams& p) : X_(X), y_(y), p_(p) {}

  int build(std::vector<Eigen::Index>& rows, std::size_t depth, std::vector<TreeNode>& nodes) {
    TreeNode node;
    node.depth = depth;
    for (Eigen::Index r : rows) ++node.counts[static_cast<std::size_t>(y_[static_cast<std::size_t>(r)])];
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(node);

    const std::size_t n = rows.size();
    const bool pure = std::count_if(node.counts.begin(), node.counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    if (pure || n < p_.min_samples_split || n < 2 * p_.min_samples_leaf || (p_.max_depth && depth >= *p_.max_depth))
      return id;

    const Split split = best_split(rows, node.counts);
    if (split.feature < 0) return id;

    std::vector<Eigen::Index> left, right;
    for (Eigen::Index r : rows) (X_(r, split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[static_cast<std::size_t>(id)].feature = split.feature;
    nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
    const int l = build(left, depth + 1, nodes);
    nodes[static_cast<std::size_t>(id)].left = l;
    const int r = build(right, depth + 1, nodes);
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

 private:
  Split best_split(const std::vector<Eigen::Index>& rows, const ClassCounts& total) const {
    const std::size_t n = rows.size();
    const double parent = sum_sq_over_n(total, n);
    Split best;
    std::vector<Eigen::Index> order(rows);
    for (Eigen::Index f = 0; f < X_.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double va = X_(a, f), vb = X_(b, f);
        return va < vb || (va == vb && a < b);
      });
      ClassCounts left{};
      ClassCounts right = total;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto cls = static_cast<std::size_t>(y_[static_cast<std::size_t>(order[i])]);
        ++left[cls];
        --right[cls];
        const double lo = X_(order[i], f), hi = X_(order[i + 1], f);
        if (!(lo < hi)) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < p_.min_samples_leaf || nr < p_.min_samples_leaf) continue;
        const double gain = sum_sq_over_n(left, nl) + sum_sq_over_n(right, nr) - parent;
        if (gain > best.gain + 1e-12) {
          double t = lo + (hi - lo) / 2.0;
          if (!(t < hi)) t = lo;
          best = {static_cast<int>(f), t, gain};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  const std::vector<int>& y_;
  const TreeParams& p_;
};

}  // namespace

DecisionTree tree_fit(const Eigen::MatrixXd& X, const std::vector<int>& y, const TreeParams& params) {
  params.validate();
  if (X.rows() == 0 || X.cols() == 0) throw InputError("tree_fit: empty data");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw InputError("tree_fit: label count mismatch");
  if (!X.allFinite()) throw InputError("tree_fit: non-finite features");
  for (int label : y)
    if (label < 0 || label >= static_cast<int>(kNumStates)) throw InputError("tree_fit: label out of range");

  DecisionTree tree;
  tree.params = params;
  tree.n_features = X.cols();
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  Builder(X, y, params).build(rows, 0, tree.nodes);
  return tree;
}

std::vector<int> tree_predict(const DecisionTree& tree, const Eigen::MatrixXd& X) {
  if (!tree.fitted()) throw StateError("tree_predict on an unfitted tree");
  if (X.cols() != tree.n_features) throw InputError("tree_predict: feature width mismatch");
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) out[static_cast<std::size_t>(r)] = tree.predict_row(X.row(r));
  return out;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const TreeNode& n : nodes)
    arr.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
                   {"right", n.right},     {"depth", n.depth},         {"counts", n.counts}});
  return {{"params", params.to_json()}, {"n_features", n_features}, {"nodes", arr}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree t;
  t.params = TreeParams::from_json(j.at("params"));
  t.n_features = j.at("n_features").get<Eigen::Index>();
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.feature = n.at("feature").get<int>();
    node.threshold = n.at("threshold").get<double>();
    node.left = n.at("left").get<int>();
    node.right = n.at("right").get<int>();
    node.depth = n.at("depth").get<std::size_t>();
    node.counts = n.at("counts").get<ClassCounts>();
    t.nodes.push_back(node);
  }
  const auto count = static_cast<int>(t.nodes.size());
  for (const TreeNode& n : t.nodes)
    if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count || n.feature >= t.n_features))
      throw InputError("decision tree document has a dangling node reference");
  return t;
}

}  // namespace tactile
