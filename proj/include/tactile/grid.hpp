#pragma once

#include "tactile/svm.hpp"
#include "tactile/tree.hpp"
#include "tactile/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tactile {

/// One candidate: parameter name -> value token, in declaration order.
using HyperParams = std::vector<std::pair<std::string, std::string>>;

std::string format_params(const HyperParams& p);
const std::string& param_value(const HyperParams& p, const std::string& key);

/// Named value lists whose Cartesian product defines the candidates.
class HyperGrid {
 public:
  HyperGrid() = default;
  explicit HyperGrid(std::vector<std::pair<std::string, std::vector<std::string>>> axes);

  /// Plain-text form: one `key = v1, v2, ...` line per axis; `#` starts a comment.
  static HyperGrid parse(const std::string& text);
  static HyperGrid load(const std::string& path);
  std::string str() const;

  const std::vector<std::pair<std::string, std::vector<std::string>>>& axes() const noexcept { return axes_; }
  std::size_t size() const;
  /// Odometer order: the last axis varies fastest.
  std::vector<HyperParams> candidates() const;

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> axes_;
};

HyperGrid default_tree_grid();
HyperGrid default_svm_grid();

TreeParams tree_params_from(const HyperParams& p);
SvmParams svm_params_from(const HyperParams& p, const SvmParams& base = {});

struct CandidateResult {
  std::size_t index = 0;
  HyperParams params;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  bool cached = false;  // result reused from an equivalent earlier candidate
};

template <typename Model>
struct GridResult {
  std::size_t best_index = 0;
  HyperParams best_params;
  Model model;
  std::vector<CandidateResult> report;
};

struct LabeledMatrix {
  const Eigen::MatrixXd* X = nullptr;
  const std::vector<int>* y = nullptr;
};

double accuracy(const std::vector<int>& predicted, const std::vector<int>& actual);

/// Per-candidate seed derived from the master seed.
std::uint64_t candidate_seed(std::uint64_t master, std::size_t index);

/// Exhaustive search. Fit failures are recorded; the search throws only when
/// every candidate fails. The winner maximizes validation accuracy with ties to
/// the first candidate. `effective_key`, when given, maps candidates that must
/// produce identical models to one key so that they are fitted once.
template <typename Model>
GridResult<Model> grid_search(const std::function<Model(const HyperParams&, std::uint64_t)>& fit,
                              const std::function<std::vector<int>(const Model&, const Eigen::MatrixXd&)>& predict,
                              const HyperGrid& grid, LabeledMatrix train, LabeledMatrix val, std::uint64_t seed,
                              const std::function<std::string(const HyperParams&)>& effective_key = nullptr) {
  const std::vector<HyperParams> cands = grid.candidates();
  if (cands.empty()) throw ConfigError("grid search over an empty grid");
  if (train.X->rows() == 0 || val.X->rows() == 0) throw InputError("grid search needs non-empty splits");

  GridResult<Model> out;
  std::optional<double> best;
  std::map<std::string, CandidateResult> memo;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    CandidateResult r;
    r.index = i;
    r.params = cands[i];
    r.seed = candidate_seed(seed, i);
    const std::string key = effective_key ? effective_key(cands[i]) : std::string();
    if (effective_key) {
      const auto hit = memo.find(key);
      if (hit != memo.end()) {
        r.ok = hit->second.ok;
        r.error = hit->second.error;
        r.train_accuracy = hit->second.train_accuracy;
        r.val_accuracy = hit->second.val_accuracy;
        r.cached = true;
        out.report.push_back(r);
        continue;  // an equivalent earlier candidate already holds any tie
      }
    }
    try {
      Model m = fit(cands[i], r.seed);
      r.train_accuracy = accuracy(predict(m, *train.X), *train.y);
      r.val_accuracy = accuracy(predict(m, *val.X), *val.y);
      r.ok = true;
      if (!best || r.val_accuracy > *best) {
        best = r.val_accuracy;
        out.best_index = i;
        out.best_params = cands[i];
        out.model = std::move(m);
      }
    } catch (const Error& e) {
      r.ok = false;
      r.error = e.what();
    }
    if (effective_key) memo.emplace(key, r);
    out.report.push_back(r);
  }
  if (!best) throw ConvergenceError("every grid-search candidate failed", cands.size());
  return out;
}

/// Columns: index, one per axis, seed, status, cached, train_accuracy, val_accuracy, error.
void write_grid_report_csv(const std::string& path, const HyperGrid& grid, const std::vector<CandidateResult>& report);

}  // namespace tactile
