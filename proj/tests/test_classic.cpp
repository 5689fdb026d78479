#include "support.hpp"
#include "tactile/grid.hpp"
#include "tactile/svm.hpp"
#include "tactile/tree.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace tactile;

namespace {

struct Labeled {
  Eigen::MatrixXd X;
  std::vector<int> y;
};

Labeled xor_data() {
  Labeled d{Eigen::MatrixXd(4, 2), {0, 1, 1, 0}};
  d.X << 0, 0, 0, 1, 1, 0, 1, 1;
  return d;
}

Labeled blobs(oracle::Rng& rng, std::size_t per_class, int classes, double spread) {
  Labeled d{Eigen::MatrixXd(static_cast<Eigen::Index>(per_class) * classes, 3), {}};
  Eigen::Index r = 0;
  for (int c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (Eigen::Index j = 0; j < 3; ++j) d.X(r, j) = (j == c % 3 ? 3.0 * (1 + c / 3) : 0.0) + oracle::gauss(rng, spread);
      d.y.push_back(c);
    }
  return d;
}

Labeled circles(oracle::Rng& rng, std::size_t per_class) {
  // Evenly spaced angles on radii 1 and 0.5 with Gaussian jitter.
  Labeled d{Eigen::MatrixXd(static_cast<Eigen::Index>(2 * per_class), 2), {}};
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int c = static_cast<int>(i % 2);
    const double radius = c == 0 ? 0.5 : 1.0;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i / 2) / static_cast<double>(per_class);
    d.X.row(static_cast<Eigen::Index>(i)) << radius * std::cos(angle) + oracle::gauss(rng, 0.05),
        radius * std::sin(angle) + oracle::gauss(rng, 0.05);
    d.y.push_back(c);
  }
  return d;
}

double acc(const std::vector<int>& p, const std::vector<int>& y) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += p[i] == y[i];
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

int walk(const DecisionTree& t, const Eigen::RowVectorXd& x) {
  int n = 0;
  while (t.nodes[static_cast<std::size_t>(n)].feature >= 0) {
    const TreeNode& node = t.nodes[static_cast<std::size_t>(n)];
    n = x(node.feature) <= node.threshold ? node.left : node.right;
  }
  const ClassCounts& c = t.nodes[static_cast<std::size_t>(n)].counts;
  return static_cast<int>(std::max_element(c.begin(), c.end()) - c.begin());
}

double kernel_oracle(const Kernel& k, const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  long double dot = 0, dist = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a(i)) * b(i);
    dist += static_cast<long double>(a(i) - b(i)) * (a(i) - b(i));
  }
  switch (k.type) {
    case KernelType::Linear: return static_cast<double>(dot);
    case KernelType::Rbf: return static_cast<double>(std::exp(-k.gamma * dist));
    case KernelType::Poly: return static_cast<double>(std::pow(k.gamma * dot + k.coef0, k.degree));
    case KernelType::Sigmoid: return static_cast<double>(std::tanh(k.gamma * dot + k.coef0));
  }
  return 0.0;
}

}  // namespace

TEST_CASE("tree on a single class is one leaf") {
  oracle::Rng rng(1);
  Labeled d = blobs(rng, 20, 1, 1.0);
  const DecisionTree t = tree_fit(d.X, d.y, TreeParams{});
  CHECK(t.leaf_count() == 1);
  CHECK(t.depth() == 0);
  for (int p : tree_predict(t, d.X)) CHECK(p == 0);
}

TEST_CASE("tree solves xor at depth two") {
  const Labeled d = xor_data();
  const DecisionTree t = tree_fit(d.X, d.y, TreeParams{});
  CHECK(t.depth() == 2);
  CHECK(tree_predict(t, d.X) == d.y);
  TreeParams stump;
  stump.max_depth = 1;
  CHECK(acc(tree_predict(tree_fit(d.X, d.y, stump), d.X), d.y) < 1.0);
}

TEST_CASE("tree structure invariants and path-walk oracle") {
  oracle::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Labeled d = blobs(rng, 30, 5, 2.0);
    TreeParams p;
    if (trial % 2) p.max_depth = 1 + static_cast<std::size_t>(rng() % 6);
    p.min_samples_leaf = 1 + rng() % 5;
    p.min_samples_split = 2 + rng() % 8;
    const DecisionTree t = tree_fit(d.X, d.y, p);
    if (p.max_depth) CHECK(t.depth() <= *p.max_depth);
    for (const TreeNode& n : t.nodes) {
      std::size_t total = 0;
      for (std::size_t c : n.counts) total += c;
      if (n.is_leaf()) {
        CHECK(total >= p.min_samples_leaf);
      } else {
        CHECK(total >= p.min_samples_split);
        const TreeNode& l = t.nodes[static_cast<std::size_t>(n.left)];
        const TreeNode& r = t.nodes[static_cast<std::size_t>(n.right)];
        for (std::size_t c = 0; c < kNumStates; ++c) CHECK(l.counts[c] + r.counts[c] == n.counts[c]);
      }
    }
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) CHECK(t.predict_row(d.X.row(i)) == walk(t, d.X.row(i)));
    const DecisionTree back = DecisionTree::from_json(t.to_json());
    CHECK(tree_predict(back, d.X) == tree_predict(t, d.X));
  }
}

TEST_CASE("tree training accuracy grows with depth") {
  oracle::Rng rng(3);
  const Labeled d = blobs(rng, 40, 5, 3.0);
  double prev = 0.0;
  for (std::size_t depth = 1; depth <= 12; ++depth) {
    TreeParams p;
    p.max_depth = depth;
    const double a = acc(tree_predict(tree_fit(d.X, d.y, p), d.X), d.y);
    CHECK(a >= prev);
    prev = a;
  }
  CHECK(acc(tree_predict(tree_fit(d.X, d.y, TreeParams{}), d.X), d.y) == 1.0);
}

TEST_CASE("tree preconditions") {
  const Labeled d = xor_data();
  TreeParams bad;
  bad.min_samples_leaf = 0;
  CHECK_THROWS_AS(tree_fit(d.X, d.y, bad), ConfigError);
  CHECK_THROWS_AS(tree_fit(d.X, {0, 1}, TreeParams{}), InputError);
  CHECK_THROWS_AS(tree_predict(DecisionTree{}, d.X), StateError);
}

TEST_CASE("svm two-point boundary sits at the midpoint") {
  Eigen::MatrixXd X(2, 1);
  X << -1, 1;
  SvmParams p;
  p.kernel = KernelType::Linear;
  p.C = 100.0;
  p.tolerance = 1e-6;
  const SvmModel m = svm_fit(X, {0, 1}, p);
  REQUIRE(m.machines.size() == 1);
  Eigen::MatrixXd q(3, 1);
  q << 0, -1, 1;
  const Eigen::VectorXd f = m.decision_values(q).col(0);
  CHECK(std::abs(f(0)) <= 1e-6);
  CHECK(std::abs(std::abs(f(1)) - 1.0) <= 1e-5);
  CHECK(f(1) == doctest::Approx(-f(2)).epsilon(1e-6));
  CHECK(svm_predict(m, X) == std::vector<int>{0, 1});
}

TEST_CASE("svm on concentric circles: rbf separates, linear cannot") {
  oracle::Rng rng(4);
  const Labeled train = circles(rng, 150), test = circles(rng, 150);
  SvmParams rbf;
  rbf.C = 10.0;
  const SvmModel m = svm_fit(train.X, train.y, rbf);
  CHECK(acc(svm_predict(m, test.X), test.y) >= 0.95);
  const KktReport k = kkt_audit(m, train.X, train.y, 1e-3);
  CHECK(k.box_ok);
  CHECK(k.passed);
  CHECK(k.worst_violation <= 1e-3);

  SvmParams lin;
  lin.kernel = KernelType::Linear;
  const SvmModel l = svm_fit(train.X, train.y, lin);
  CHECK(acc(svm_predict(l, train.X), train.y) <= 0.60);
  CHECK(acc(svm_predict(l, test.X), test.y) <= 0.60);
  CHECK(acc(svm_predict(m, train.X), train.y) >= 0.95);
}

TEST_CASE("svm decision values match a kernel-expansion oracle") {
  oracle::Rng rng(5);
  const Labeled d = blobs(rng, 15, 5, 1.5);
  for (KernelType kt : {KernelType::Linear, KernelType::Rbf, KernelType::Poly, KernelType::Sigmoid})
    for (DecisionShape shape : {DecisionShape::OneVsRest, DecisionShape::OneVsOne}) {
      SvmParams p;
      p.kernel = kt;
      p.shape = shape;
      p.gamma = kt == KernelType::Rbf ? Gamma{} : Gamma::fixed(0.05);
      p.coef0 = kt == KernelType::Poly ? 1.0 : 0.0;
      SvmModel m;
      try {
        m = svm_fit(d.X, d.y, p);
      } catch (const ConvergenceError&) {
        continue;  // sigmoid kernels are not PSD; failing to converge is allowed
      }
      CHECK(m.machines.size() == (shape == DecisionShape::OneVsRest ? 5u : 10u));
      const KktReport k = kkt_audit(m, d.X, d.y);
      CHECK(k.box_ok);
      const Eigen::MatrixXd f = m.decision_values(d.X.topRows(10));
      for (std::size_t mi = 0; mi < m.machines.size(); ++mi) {
        const BinarySvm& b = m.machines[mi];
        for (Eigen::Index i = 0; i < 10; ++i) {
          long double s = b.bias;
          for (Eigen::Index sv = 0; sv < b.support_vectors.rows(); ++sv)
            s += b.coef(sv) * kernel_oracle(m.kernel, b.support_vectors.row(sv), d.X.row(i));
          CHECK(std::abs(f(i, static_cast<Eigen::Index>(mi)) - static_cast<double>(s)) <= 1e-8 * (1.0 + std::abs(static_cast<double>(s))));
        }
        for (Eigen::Index sv = 0; sv < b.alpha.size(); ++sv) {
          CHECK(b.alpha(sv) >= 0.0);
          CHECK(b.alpha(sv) <= p.C + 1e-9);
        }
      }
      const SvmModel back = SvmModel::from_json(m.to_json());
      CHECK(svm_predict(back, d.X) == svm_predict(m, d.X));
    }
}

TEST_CASE("svm label swap negates the binary decision") {
  oracle::Rng rng(6);
  const Labeled d = blobs(rng, 40, 2, 2.0);
  std::vector<int> swapped(d.y.size());
  for (std::size_t i = 0; i < d.y.size(); ++i) swapped[i] = 1 - d.y[i];
  SvmParams p;
  p.tolerance = 1e-6;
  const Eigen::VectorXd a = svm_fit(d.X, d.y, p).decision_values(d.X).col(0);
  const Eigen::VectorXd b = svm_fit(d.X, swapped, p).decision_values(d.X).col(0);
  CHECK((a + b).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("gamma scale uses the population variance") {
  oracle::Rng rng(7);
  Eigen::MatrixXd X(50, 4);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = oracle::gauss(rng, 2.0);
  long double mean = 0, ss = 0;
  for (Eigen::Index i = 0; i < X.size(); ++i) mean += X.data()[i];
  mean /= X.size();
  for (Eigen::Index i = 0; i < X.size(); ++i) ss += (X.data()[i] - mean) * (X.data()[i] - mean);
  const double var = static_cast<double>(ss / X.size());
  CHECK(Gamma{}.resolve(X) == doctest::Approx(1.0 / (4.0 * var)).epsilon(1e-12));
  CHECK(Gamma::fixed(0.3).resolve(X) == 0.3);
  CHECK(Gamma::parse("scale").scale);
  CHECK(Gamma::parse("0.1").value == 0.1);
  CHECK_THROWS_AS(Gamma::parse("-1"), ConfigError);
}

TEST_CASE("svm preconditions") {
  const Labeled d = xor_data();
  SvmParams bad;
  bad.C = 0.0;
  CHECK_THROWS_AS(svm_fit(d.X, d.y, bad), ConfigError);
  CHECK_THROWS_AS(svm_fit(d.X, {0}, SvmParams{}), InputError);
  CHECK_THROWS_AS(svm_predict(SvmModel{}, d.X), StateError);
}

namespace {

// Stand-in model for grid-search tests: predicts `label` everywhere.
struct ConstModel {
  int label = -1;
};

std::vector<int> const_predict(const ConstModel& m, const Eigen::MatrixXd& X) {
  return std::vector<int>(static_cast<std::size_t>(X.rows()), m.label);
}

}  // namespace

TEST_CASE("grid search selection, reporting and determinism") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(10, 1);
  std::vector<int> ytrain(10, 1), yval = {2, 2, 2, 2, 2, 2, 1, 1, 1, 1};
  const HyperGrid grid({{"label", {"0", "1", "2", "3"}}, {"pad", {"a", "b"}}});
  std::vector<std::uint64_t> seeds;
  const auto fit = [&](const HyperParams& p, std::uint64_t s) {
    seeds.push_back(s);
    if (param_value(p, "label") == "3") throw InputError("rejected");
    return ConstModel{std::stoi(param_value(p, "label"))};
  };
  const auto r = grid_search<ConstModel>(fit, const_predict, grid, {&X, &ytrain}, {&X, &yval}, 42);
  CHECK(r.report.size() == grid.size());
  CHECK(r.model.label == 2);
  CHECK(r.best_index == 4);  // first of the two tied label=2 candidates
  double best = 0.0;
  for (const auto& c : r.report)
    if (c.ok) best = std::max(best, c.val_accuracy);
  CHECK(r.report[r.best_index].val_accuracy == best);
  CHECK_FALSE(r.report[6].ok);
  CHECK(r.report[6].error == "rejected");
  for (std::size_t i = 0; i < r.report.size(); ++i) CHECK(r.report[i].seed == candidate_seed(42, i));

  const std::vector<std::uint64_t> first = seeds;
  seeds.clear();
  const auto again = grid_search<ConstModel>(fit, const_predict, grid, {&X, &ytrain}, {&X, &yval}, 42);
  CHECK(seeds == first);
  CHECK(again.best_index == r.best_index);

  seeds.clear();
  const auto keyed = grid_search<ConstModel>(fit, const_predict, grid, {&X, &ytrain}, {&X, &yval}, 42,
                                             [](const HyperParams& p) { return param_value(p, "label"); });
  CHECK(seeds.size() == 4);
  CHECK(keyed.report[5].cached);
  CHECK(keyed.report[5].val_accuracy == keyed.report[4].val_accuracy);
  CHECK(keyed.best_index == 4);

  const HyperGrid single({{"label", std::vector<std::string>{"1"}}});
  CHECK(grid_search<ConstModel>(fit, const_predict, single, {&X, &ytrain}, {&X, &yval}, 1).model.label == 1);
  const HyperGrid doomed({{"label", std::vector<std::string>{"3"}}});
  CHECK_THROWS_AS(grid_search<ConstModel>(fit, const_predict, doomed, {&X, &ytrain}, {&X, &yval}, 1), ConvergenceError);
}

TEST_CASE("grid search over real trees picks the dominant candidate") {
  oracle::Rng rng(8);
  const Labeled train = blobs(rng, 30, 5, 1.0), val = blobs(rng, 10, 5, 1.0);
  const HyperGrid grid({{"max_depth", {"1", "none"}}});
  const auto r = grid_search<DecisionTree>([&](const HyperParams& p, std::uint64_t) { return tree_fit(train.X, train.y, tree_params_from(p)); },
                                           tree_predict, grid, {&train.X, &train.y}, {&val.X, &val.y}, 3);
  CHECK(format_params(r.best_params) == format_params(HyperParams{{"max_depth", "none"}}));
  CHECK(r.report[1].val_accuracy > r.report[0].val_accuracy);

  const auto path = std::filesystem::temp_directory_path() / "tactile_grid_report.csv";
  write_grid_report_csv(path.string(), grid, r.report);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "index,max_depth,seed,status,cached,train_accuracy,val_accuracy,error");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 2);
  std::filesystem::remove(path);
}

TEST_CASE("hyperparameter grid parsing and converters") {
  const HyperGrid g = HyperGrid::parse("# tree grid\nmax_depth = 3, none\n\nmin_samples_leaf=1,2 # trailing\n");
  REQUIRE(g.axes().size() == 2);
  CHECK(g.size() == 4);
  const auto c = g.candidates();
  CHECK(format_params(c[1]) == format_params(HyperParams{{"max_depth", "3"}, {"min_samples_leaf", "2"}}));
  CHECK(HyperGrid::parse(g.str()).candidates() == c);
  CHECK_THROWS_AS(HyperGrid::parse("max_depth 3"), ConfigError);
  CHECK_THROWS_AS(HyperGrid::parse("a = 1\na = 2"), ConfigError);

  CHECK(default_tree_grid().size() == 60);
  CHECK(default_svm_grid().size() == 128);
  CHECK_FALSE(tree_params_from({{"max_depth", "none"}}).max_depth.has_value());
  CHECK(tree_params_from({{"max_depth", "8"}}).max_depth == 8u);
  CHECK_THROWS_AS(tree_params_from({{"depth", "8"}}), ConfigError);
  CHECK_THROWS_AS(tree_params_from({{"max_depth", "-2"}}), ConfigError);
  const SvmParams s = svm_params_from({{"C", "10"}, {"kernel", "poly"}, {"gamma", "0.1"}, {"decision_function_shape", "ovo"}});
  CHECK(s.C == 10.0);
  CHECK(s.kernel == KernelType::Poly);
  CHECK(s.gamma.value == 0.1);
  CHECK(s.shape == DecisionShape::OneVsOne);
  CHECK_THROWS_AS(svm_params_from({{"kernel", "cubic"}}), ConfigError);
}
