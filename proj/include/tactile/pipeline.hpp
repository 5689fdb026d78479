#pragma once

#include "tactile/dimred.hpp"
#include "tactile/feature_config.hpp"
#include "tactile/features.hpp"
#include "tactile/grid.hpp"
#include "tactile/networks.hpp"
#include "tactile/signal.hpp"
#include "tactile/svm.hpp"
#include "tactile/synth.hpp"
#include "tactile/tree.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tactile {

enum class FeatureSet { Manual, Pca, Ica, Ae60, Ae100, Raw };
enum class Algorithm { Tree, Svm, Cnn };

inline constexpr std::array<FeatureSet, 6> kAllFeatureSets = {FeatureSet::Manual, FeatureSet::Pca, FeatureSet::Ica,
                                                              FeatureSet::Ae60,   FeatureSet::Ae100, FeatureSet::Raw};
inline constexpr std::array<Algorithm, 3> kAllAlgorithms = {Algorithm::Tree, Algorithm::Svm, Algorithm::Cnn};

std::string to_string(FeatureSet f);
std::string to_string(Algorithm a);
FeatureSet parse_feature_set(const std::string& s);
Algorithm parse_algorithm(const std::string& s);

/// Raw snippets feed only the CNN; every reduced set feeds the tree and the SVM.
bool valid_pair(FeatureSet f, Algorithm a) noexcept;

/// Raised by run_pipeline with the failing stage in the message.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct CnnSearch {
  std::vector<double> learning_rates{1e-3, 1e-4};
  std::vector<std::size_t> filters{16};
  std::vector<double> early_dropouts{0.5};
  std::vector<double> late_dropouts{0.1};
  std::size_t round1_epochs = 40;  // per candidate
  std::size_t round2_epochs = 10;  // winner only, learning rate / 10
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  WindowConfig window;
  FeatureConfig features;
  SplitCounts counts;
  GestureParams generator;
  double generator_margin = 1.2;
  std::string data_dir;  // empty: generate synthetic data
  std::string output_dir = "out";

  std::vector<FeatureSet> feature_sets{kAllFeatureSets.begin(), kAllFeatureSets.end()};
  std::vector<Algorithm> algorithms{kAllAlgorithms.begin(), kAllAlgorithms.end()};

  std::size_t pca_components = 15;
  double pca_variance = 0.0;  // > 0 selects the variance-target mode instead
  IcaConfig ica;
  std::size_t ica_restarts = 4;  // extra seeded starts after a FastICA non-convergence

  CnnConfig cnn;
  CnnSearch cnn_search;
  AutoencoderConfig autoencoder;
  HyperGrid tree_grid = default_tree_grid();
  HyperGrid svm_grid = default_svm_grid();
  SvmParams svm_base;

  // Acceptance gates on test accuracy.
  double gate_cnn = 0.85;
  double gate_all = 0.40;

  void validate() const;
  /// Long epoch budgets (1000-epoch autoencoders and CNN fine-tuning).
  void apply_paper_scale();
  /// Autoencoder and CNN round-one budgets become `n`, round two ceil(n / 4).
  void apply_epochs(std::size_t n);

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Seed of an independent pipeline stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumStates>, kNumStates> counts{};  // [actual][predicted]

  void add(int actual, int predicted);
  std::size_t total() const;
  std::size_t row_sum(std::size_t actual) const;
  double accuracy() const;
  std::size_t true_positives(std::size_t c) const { return counts[c][c]; }
  std::size_t false_positives(std::size_t c) const;
  nlohmann::json to_json() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix evaluate(const std::vector<int>& actual, const std::vector<int>& predicted);

// ---------------------------------------------------------------------------
// Feature chains and trained models
// ---------------------------------------------------------------------------

/// Snippets -> model inputs for one feature set (fitted statistics included).
struct FeatureChain {
  FeatureSet set = FeatureSet::Manual;
  FeatureConfig features;
  Normalizer manual;  // manual, pca, ica
  std::optional<PcaModel> pca;
  std::optional<IcaModel> ica;
  std::optional<Autoencoder> encoder;  // ae60, ae100 (decoder dropped)
  Normalizer codes;                    // z-score of bottleneck codes

  Eigen::MatrixXd transform(const SnippetSet& snippets) const;
  /// Applies the chain to pre-extracted raw manual features (manual/pca/ica only).
  Eigen::MatrixXd transform_features(const Eigen::MatrixXd& raw_manual) const;
  nlohmann::json to_json() const;
  static FeatureChain from_json(const nlohmann::json& j);
};

inline constexpr int kModelSchemaVersion = 1;

struct TrainedModel {
  std::string name;  // e.g. "svm+ae100"
  FeatureSet set = FeatureSet::Manual;
  Algorithm algorithm = Algorithm::Tree;
  WindowConfig window;
  FeatureChain chain;  // unused for the CNN
  HyperParams selected;
  std::variant<DecisionTree, SvmModel, CnnClassifier> model;

  std::vector<int> predict(const SnippetSet& snippets) const;
  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedModel load(const std::filesystem::path& path);
};

/// Versioned document holding an autoencoder encoder and its code scaling.
void save_encoder(const std::filesystem::path& path, const std::string& name, const Autoencoder& ae);
Autoencoder load_encoder(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

struct ModelRow {
  std::string name;
  FeatureSet set = FeatureSet::Manual;
  Algorithm algorithm = Algorithm::Tree;
  HyperParams selected;
  std::size_t candidates = 0;
  std::size_t failed_candidates = 0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  ConfusionMatrix confusion;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  nlohmann::json dataset;  // recording and snippet counts
  nlohmann::json feature_sets;  // PCA variance, AE losses, CNN search
  std::vector<ModelRow> rows;
  std::vector<StageTiming> timings;  // wall clock, kept out of the metrics document

  std::size_t best_row() const;
  bool gates_passed(double cnn_gate, double all_gate) const;
  /// Deterministic metrics document (no wall clock).
  nlohmann::json metrics_json() const;
  /// Table of test accuracies by feature set and algorithm, then per-model detail.
  std::string table_text() const;
  double total_seconds() const;
};

struct PipelineResult {
  RunReport report;
  SyntheticDataset dataset;  // recordings as used (empty when loaded from data_dir)
  std::vector<TrainedModel> models;
  std::vector<std::pair<std::string, Autoencoder>> encoders;
  DatasetSplit split;
  std::vector<std::pair<std::string, std::vector<CandidateResult>>> grid_reports;
  std::vector<std::pair<std::string, HyperGrid>> grids;
};

/// Loads or generates recordings, filters, windows, splits and returns the split.
DatasetSplit prepare_split(const PipelineConfig& cfg, const std::vector<Recording>& recordings);

/// Generates (or loads) data, builds all feature sets, trains every eligible
/// model with grid search and evaluates on the test split.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// Writes report.json, report.txt, timing.json, config.json, confusion and
/// TP/FP CSVs, grid reports, and one JSON file per model under `dir`.
void write_outputs(const std::filesystem::path& dir, const PipelineResult& result);

/// Loads every model under `models_dir` and evaluates it on `test`.
std::vector<ModelRow> evaluate_saved_models(const std::filesystem::path& models_dir, const SnippetSet& test);

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

struct TransitionEvent {
  std::size_t index = 0;  // first snippet of the new state
  double time = 0.0;
  GestureState from = GestureState::NoContact;
  GestureState to = GestureState::NoContact;
  bool operator==(const TransitionEvent&) const = default;
};

/// Change points of a per-snippet state stream. A new state is accepted after
/// `debounce` consecutive agreeing predictions and dated at the first of them.
std::vector<TransitionEvent> infer_transitions(const std::vector<GestureState>& states,
                                               const std::vector<double>& times, std::size_t debounce = 2);

}  // namespace tactile
