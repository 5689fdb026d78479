#include "tactile/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace tactile {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Names

std::string to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::Manual: return "manual";
    case FeatureSet::Pca: return "pca";
    case FeatureSet::Ica: return "ica";
    case FeatureSet::Ae60: return "ae60";
    case FeatureSet::Ae100: return "ae100";
    case FeatureSet::Raw: return "raw";
  }
  return "?";
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Tree: return "tree";
    case Algorithm::Svm: return "svm";
    case Algorithm::Cnn: return "cnn";
  }
  return "?";
}

FeatureSet parse_feature_set(const std::string& s) {
  for (FeatureSet f : kAllFeatureSets)
    if (to_string(f) == s) return f;
  throw ConfigError("unknown feature set '" + s + "'");
}

Algorithm parse_algorithm(const std::string& s) {
  for (Algorithm a : kAllAlgorithms)
    if (to_string(a) == s) return a;
  throw ConfigError("unknown algorithm '" + s + "'");
}

bool valid_pair(FeatureSet f, Algorithm a) noexcept {
  return (f == FeatureSet::Raw) == (a == Algorithm::Cnn);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) { return candidate_seed(master, stream); }

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(rm.data(), rm.data() + rm.size())}};
}

Eigen::MatrixXd mat_from(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  const auto v = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != r * c) throw InputError("matrix block has the wrong number of values");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), r, c);
}

json normalizer_json(const Normalizer& n) {
  if (!n.fitted()) return nullptr;
  return {{"mean", vec_json(n.mean())}, {"std", vec_json(n.stddev())}};
}

Normalizer normalizer_from(const json& j) {
  if (j.is_null()) return {};
  return Normalizer(vec_from(j.at("mean")), vec_from(j.at("std")));
}

json window_json(const WindowConfig& w) {
  return {{"snippet_len", w.snippet_len}, {"stride", w.stride}, {"filter_cutoff_hz", w.filter_cutoff_hz},
          {"filter_order", w.filter_order}};
}

WindowConfig window_from(const json& j) {
  WindowConfig w;
  w.snippet_len = j.value("snippet_len", w.snippet_len);
  w.stride = j.value("stride", w.stride);
  w.filter_cutoff_hz = j.value("filter_cutoff_hz", w.filter_cutoff_hz);
  w.filter_order = j.value("filter_order", w.filter_order);
  return w;
}

json features_json(const FeatureConfig& f) {
  return {{"half_window", f.half_window},   {"slope_threshold", f.slope_threshold},
          {"curvature_threshold", f.curvature_threshold}, {"rolloff_fraction", f.rolloff_fraction},
          {"stft_window", f.stft_window},   {"stft_hop", f.stft_hop},
          {"rate_hz", f.rate_hz},           {"db_floor", f.db_floor}};
}

FeatureConfig features_from(const json& j) {
  FeatureConfig f;
  f.half_window = j.value("half_window", f.half_window);
  f.slope_threshold = j.value("slope_threshold", f.slope_threshold);
  f.curvature_threshold = j.value("curvature_threshold", f.curvature_threshold);
  f.rolloff_fraction = j.value("rolloff_fraction", f.rolloff_fraction);
  f.stft_window = j.value("stft_window", f.stft_window);
  f.stft_hop = j.value("stft_hop", f.stft_hop);
  f.rate_hz = j.value("rate_hz", f.rate_hz);
  f.db_floor = j.value("db_floor", f.db_floor);
  return f;
}

json grid_json(const HyperGrid& g) {
  json a = json::array();
  for (const auto& [k, vs] : g.axes()) a.push_back({{"name", k}, {"values", vs}});
  return a;
}

HyperGrid grid_from(const json& j) {
  if (j.is_string()) return HyperGrid::load(j.get<std::string>());
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& a : j) axes.emplace_back(a.at("name").get<std::string>(), a.at("values").get<std::vector<std::string>>());
  return HyperGrid(std::move(axes));
}

json params_json(const HyperParams& p) {
  json a = json::array();
  for (const auto& [k, v] : p) a.push_back({k, v});
  return a;
}

HyperParams params_from(const json& j) {
  HyperParams p;
  for (const auto& kv : j) p.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
  return p;
}

json pca_json(const PcaModel& m) {
  return {{"mean", vec_json(m.mean)}, {"components", mat_json(m.components)},
          {"explained_variance_ratio", vec_json(m.explained_variance_ratio)}};
}

PcaModel pca_from(const json& j) {
  PcaModel m;
  m.mean = vec_from(j.at("mean"));
  m.components = mat_from(j.at("components"));
  m.explained_variance_ratio = vec_from(j.at("explained_variance_ratio"));
  return m;
}

json ica_json(const IcaModel& m) {
  return {{"mean", vec_json(m.mean)}, {"whitening", mat_json(m.whitening)}, {"rotation", mat_json(m.rotation)},
          {"unmixing", mat_json(m.unmixing)}};
}

IcaModel ica_from(const json& j) {
  IcaModel m;
  m.mean = vec_from(j.at("mean"));
  m.whitening = mat_from(j.at("whitening"));
  m.rotation = mat_from(j.at("rotation"));
  m.unmixing = mat_from(j.at("unmixing"));
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string file_stem_for(const std::string& model_name) {
  std::string s = model_name;
  std::replace(s.begin(), s.end(), '+', '-');
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
  generator.validate();
  window.validate(generator.rate_hz);
  features.validate(window.snippet_len);
  if (counts.train == 0 || counts.val == 0 || counts.test == 0) throw ConfigError("split counts must be positive");
  if (!(generator_margin >= 1.0)) throw ConfigError("generator_margin must be >= 1");
  if (feature_sets.empty() || algorithms.empty()) throw ConfigError("select at least one feature set and algorithm");
  bool any = false;
  for (FeatureSet f : feature_sets)
    for (Algorithm a : algorithms) any = any || valid_pair(f, a);
  if (!any) throw ConfigError("the selected feature sets and algorithms form no valid model");
  if (pca_components == 0 && !(pca_variance > 0.0)) throw ConfigError("pca_components must be >= 1");
  if (pca_variance < 0.0 || pca_variance > 1.0) throw ConfigError("pca_variance must lie in [0, 1]");
  if (ica.components == 0) throw ConfigError("ica components must be >= 1");
  cnn.validate();
  AutoencoderConfig ae = autoencoder;
  ae.bottleneck = 60;
  ae.validate();
  if (cnn_search.learning_rates.empty() || cnn_search.filters.empty() || cnn_search.early_dropouts.empty() ||
      cnn_search.late_dropouts.empty())
    throw ConfigError("CNN search lists must be non-empty");
  for (double lr : cnn_search.learning_rates)
    if (!(lr > 0.0)) throw ConfigError("CNN search learning rates must be positive");
  if (cnn_search.round1_epochs == 0) throw ConfigError("CNN round-one epochs must be >= 1");
  if (tree_grid.size() == 0 || svm_grid.size() == 0) throw ConfigError("grids must be non-empty");
  svm_base.validate();
}

void PipelineConfig::apply_paper_scale() {
  autoencoder.epochs = 1000;
  cnn_search.round1_epochs = 100;
  cnn_search.round2_epochs = 1000;
}

void PipelineConfig::apply_epochs(std::size_t n) {
  if (n == 0) throw ConfigError("--epochs must be >= 1");
  autoencoder.epochs = n;
  cnn_search.round1_epochs = n;
  cnn_search.round2_epochs = (n + 3) / 4;
}

json PipelineConfig::to_json() const {
  json fs = json::array(), al = json::array();
  for (FeatureSet f : feature_sets) fs.push_back(to_string(f));
  for (Algorithm a : algorithms) al.push_back(to_string(a));
  return {{"seed", seed},
          {"window", window_json(window)},
          {"features", features_json(features)},
          {"counts", {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}}},
          {"generator", generator.to_json()},
          {"generator_margin", generator_margin},
          {"data_dir", data_dir},
          {"output_dir", output_dir},
          {"feature_sets", fs},
          {"algorithms", al},
          {"pca_components", pca_components},
          {"pca_variance", pca_variance},
          {"ica_restarts", ica_restarts},
          {"ica",
           {{"components", ica.components},
            {"tolerance", ica.tolerance},
            {"max_iterations", ica.max_iterations},
            {"seed", ica.seed}}},
          {"cnn", cnn.to_json()},
          {"cnn_search",
           {{"learning_rates", cnn_search.learning_rates},
            {"filters", cnn_search.filters},
            {"early_dropouts", cnn_search.early_dropouts},
            {"late_dropouts", cnn_search.late_dropouts},
            {"round1_epochs", cnn_search.round1_epochs},
            {"round2_epochs", cnn_search.round2_epochs}}},
          {"autoencoder", autoencoder.to_json()},
          {"tree_grid", grid_json(tree_grid)},
          {"svm_grid", grid_json(svm_grid)},
          {"svm_base", svm_base.to_json()},
          {"gate_cnn", gate_cnn},
          {"gate_all", gate_all}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  static const std::set<std::string> known = {
      "seed",          "window",        "features",       "counts",      "generator",   "generator_margin",
      "data_dir",      "output_dir",    "feature_sets",   "algorithms",  "pca_components", "pca_variance",
      "ica_restarts",  "ica",           "cnn",           "cnn_search",     "autoencoder", "tree_grid",   "svm_grid",
      "svm_base",      "gate_cnn",      "gate_all"};
  for (const auto& [k, unused] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");

  PipelineConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("window")) c.window = window_from(j.at("window"));
    if (j.contains("features")) c.features = features_from(j.at("features"));
    if (j.contains("counts")) {
      const auto& n = j.at("counts");
      c.counts.train = n.value("train", c.counts.train);
      c.counts.val = n.value("val", c.counts.val);
      c.counts.test = n.value("test", c.counts.test);
    }
    if (j.contains("generator")) c.generator = GestureParams::from_json(j.at("generator"));
    c.generator_margin = j.value("generator_margin", c.generator_margin);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("feature_sets")) {
      c.feature_sets.clear();
      for (const auto& s : j.at("feature_sets")) c.feature_sets.push_back(parse_feature_set(s.get<std::string>()));
    }
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& s : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(s.get<std::string>()));
    }
    c.pca_components = j.value("pca_components", c.pca_components);
    c.pca_variance = j.value("pca_variance", c.pca_variance);
    c.ica_restarts = j.value("ica_restarts", c.ica_restarts);
    if (j.contains("ica")) {
      const auto& i = j.at("ica");
      c.ica.components = i.value("components", c.ica.components);
      c.ica.tolerance = i.value("tolerance", c.ica.tolerance);
      c.ica.max_iterations = i.value("max_iterations", c.ica.max_iterations);
      c.ica.seed = i.value("seed", c.ica.seed);
    }
    if (j.contains("cnn")) c.cnn = CnnConfig::from_json(j.at("cnn"));
    if (j.contains("cnn_search")) {
      const auto& s = j.at("cnn_search");
      c.cnn_search.learning_rates = s.value("learning_rates", c.cnn_search.learning_rates);
      c.cnn_search.filters = s.value("filters", c.cnn_search.filters);
      c.cnn_search.early_dropouts = s.value("early_dropouts", c.cnn_search.early_dropouts);
      c.cnn_search.late_dropouts = s.value("late_dropouts", c.cnn_search.late_dropouts);
      c.cnn_search.round1_epochs = s.value("round1_epochs", c.cnn_search.round1_epochs);
      c.cnn_search.round2_epochs = s.value("round2_epochs", c.cnn_search.round2_epochs);
    }
    if (j.contains("autoencoder")) c.autoencoder = AutoencoderConfig::from_json(j.at("autoencoder"));
    if (j.contains("tree_grid")) c.tree_grid = grid_from(j.at("tree_grid"));
    if (j.contains("svm_grid")) c.svm_grid = grid_from(j.at("svm_grid"));
    if (j.contains("svm_base")) c.svm_base = SvmParams::from_json(j.at("svm_base"));
    c.gate_cnn = j.value("gate_cnn", c.gate_cnn);
    c.gate_all = j.value("gate_all", c.gate_all);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Confusion matrix

void ConfusionMatrix::add(int actual, int predicted) {
  if (actual < 0 || actual >= static_cast<int>(kNumStates) || predicted < 0 || predicted >= static_cast<int>(kNumStates))
    throw InputError("confusion matrix label out of range");
  ++counts[static_cast<std::size_t>(actual)][static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (std::size_t v : row) n += v;
  return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t actual) const {
  std::size_t n = 0;
  for (std::size_t v : counts[actual]) n += v;
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t diag = 0;
  for (std::size_t c = 0; c < kNumStates; ++c) diag += counts[c][c];
  return static_cast<double>(diag) / static_cast<double>(n);
}

std::size_t ConfusionMatrix::false_positives(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < kNumStates; ++r)
    if (r != c) n += counts[r][c];
  return n;
}

json ConfusionMatrix::to_json() const {
  json tp = json::object(), fp = json::object();
  for (std::size_t c = 0; c < kNumStates; ++c) {
    const std::string s(to_string(state_from_ordinal(static_cast<int>(c))));
    tp[s] = true_positives(c);
    fp[s] = false_positives(c);
  }
  return {{"counts", counts}, {"total", total()}, {"accuracy", accuracy()}, {"true_positives", tp},
          {"false_positives", fp}};
}

ConfusionMatrix evaluate(const std::vector<int>& actual, const std::vector<int>& predicted) {
  if (actual.empty()) throw InputError("evaluate on an empty set");
  if (actual.size() != predicted.size()) throw InputError("evaluate: prediction count mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < actual.size(); ++i) m.add(actual[i], predicted[i]);
  return m;
}

// ---------------------------------------------------------------------------
// Feature chains and models

Eigen::MatrixXd FeatureChain::transform_features(const Eigen::MatrixXd& raw) const {
  switch (set) {
    case FeatureSet::Manual: return manual.apply(raw);
    case FeatureSet::Pca:
      if (!pca) throw StateError("PCA chain without a fitted model");
      return project(*pca, manual.apply(raw));
    case FeatureSet::Ica:
      if (!ica) throw StateError("ICA chain without a fitted model");
      return project(*ica, manual.apply(raw));
    default: throw StateError("feature set " + to_string(set) + " is not derived from manual features");
  }
}

Eigen::MatrixXd FeatureChain::transform(const SnippetSet& snippets) const {
  switch (set) {
    case FeatureSet::Manual:
    case FeatureSet::Pca:
    case FeatureSet::Ica:
      return transform_features(extract_feature_matrix(snippets, features, TapTemplate::raised_cosine()));
    case FeatureSet::Ae60:
    case FeatureSet::Ae100:
      if (!encoder) throw StateError("autoencoder chain without an encoder");
      return codes.apply(encode(*encoder, snippets));
    case FeatureSet::Raw: break;
  }
  throw StateError("raw snippets have no feature chain");
}

json FeatureChain::to_json() const {
  json j = {{"set", to_string(set)}, {"features", features_json(features)}, {"manual", normalizer_json(manual)},
            {"codes", normalizer_json(codes)}};
  j["pca"] = pca ? pca_json(*pca) : json(nullptr);
  j["ica"] = ica ? ica_json(*ica) : json(nullptr);
  j["encoder"] = encoder ? encoder->to_json(false) : json(nullptr);
  return j;
}

FeatureChain FeatureChain::from_json(const json& j) {
  FeatureChain c;
  c.set = parse_feature_set(j.at("set").get<std::string>());
  c.features = features_from(j.at("features"));
  c.manual = normalizer_from(j.at("manual"));
  c.codes = normalizer_from(j.at("codes"));
  if (!j.at("pca").is_null()) c.pca = pca_from(j.at("pca"));
  if (!j.at("ica").is_null()) c.ica = ica_from(j.at("ica"));
  if (!j.at("encoder").is_null()) {
    c.encoder = Autoencoder::from_json(j.at("encoder"));
    c.encoder->decoder = nn::Sequential();
  }
  return c;
}

std::vector<int> TrainedModel::predict(const SnippetSet& snippets) const {
  if (snippets.empty()) return {};
  if (const auto* cnn = std::get_if<CnnClassifier>(&model)) return predict_cnn(*cnn, snippets).labels;
  const Eigen::MatrixXd X = chain.transform(snippets);
  if (const auto* tree = std::get_if<DecisionTree>(&model)) return tree_predict(*tree, X);
  return svm_predict(std::get<SvmModel>(model), X);
}

json TrainedModel::to_json() const {
  json j = {{"schema_version", kModelSchemaVersion},
            {"name", name},
            {"feature_set", to_string(set)},
            {"algorithm", to_string(algorithm)},
            {"window", window_json(window)},
            {"selected", params_json(selected)}};
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    j["kind"] = "decision_tree";
    j["model"] = tree->to_json();
  } else if (const auto* svm = std::get_if<SvmModel>(&model)) {
    j["kind"] = "svm";
    j["model"] = svm->to_json();
  } else {
    j["kind"] = "cnn";
    j["model"] = std::get<CnnClassifier>(model).to_json();
  }
  j["chain"] = algorithm == Algorithm::Cnn ? json(nullptr) : chain.to_json();
  return j;
}

TrainedModel TrainedModel::from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kModelSchemaVersion)
      throw InputError("unsupported model schema version " + j.at("schema_version").dump());
    TrainedModel m;
    m.name = j.at("name").get<std::string>();
    m.set = parse_feature_set(j.at("feature_set").get<std::string>());
    m.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    m.window = window_from(j.at("window"));
    m.selected = params_from(j.at("selected"));
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "decision_tree") m.model = DecisionTree::from_json(j.at("model"));
    else if (kind == "svm") m.model = SvmModel::from_json(j.at("model"));
    else if (kind == "cnn") m.model = CnnClassifier::from_json(j.at("model"));
    else throw InputError("unknown model kind '" + kind + "'");
    if (!j.at("chain").is_null()) m.chain = FeatureChain::from_json(j.at("chain"));
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  }
}

void TrainedModel::save(const std::filesystem::path& path) const { write_text(path, to_json().dump(1) + "\n"); }

TrainedModel TrainedModel::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

void save_encoder(const std::filesystem::path& path, const std::string& name, const Autoencoder& ae) {
  const json j = {{"schema_version", kModelSchemaVersion},
                  {"kind", "autoencoder_encoder"},
                  {"name", name},
                  {"model", ae.to_json(false)}};
  write_text(path, j.dump(1) + "\n");
}

Autoencoder load_encoder(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    if (j.at("schema_version").get<int>() != kModelSchemaVersion || j.at("kind") != "autoencoder_encoder")
      throw InputError(path.string() + " is not an encoder document");
    return Autoencoder::from_json(j.at("model"));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed encoder document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Report

std::size_t RunReport::best_row() const {
  if (rows.empty()) throw StateError("report has no model rows");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].test_accuracy > rows[best].test_accuracy) best = i;
  return best;
}

bool RunReport::gates_passed(double cnn_gate, double all_gate) const {
  bool cnn_seen = false;
  for (const ModelRow& r : rows) {
    if (r.test_accuracy < all_gate) return false;
    if (r.algorithm == Algorithm::Cnn) {
      cnn_seen = true;
      if (r.test_accuracy < cnn_gate) return false;
    }
  }
  return cnn_seen;
}

json RunReport::metrics_json() const {
  json models = json::array();
  for (const ModelRow& r : rows)
    models.push_back({{"name", r.name},
                      {"feature_set", to_string(r.set)},
                      {"algorithm", to_string(r.algorithm)},
                      {"selected", params_json(r.selected)},
                      {"candidates", r.candidates},
                      {"failed_candidates", r.failed_candidates},
                      {"val_accuracy", r.val_accuracy},
                      {"test_accuracy", r.test_accuracy},
                      {"confusion", r.confusion.to_json()}});
  json j = {{"schema_version", kModelSchemaVersion}, {"seed", seed},          {"config", config},
            {"dataset", dataset},                     {"feature_sets", feature_sets}, {"models", models}};
  if (!rows.empty()) {
    const ModelRow& b = rows[best_row()];
    j["best_model"] = {{"name", b.name}, {"test_accuracy", b.test_accuracy}};
    const double gc = config.value("gate_cnn", 0.85), ga = config.value("gate_all", 0.40);
    j["gates"] = {{"cnn", gc}, {"all", ga}, {"passed", gates_passed(gc, ga)}};
  }
  return j;
}

std::string RunReport::table_text() const {
  std::ostringstream os;
  char buf[256];
  os << "Test accuracy by feature set and algorithm\n\n";
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s\n", "feature set", "tree", "svm", "cnn");
  os << buf;
  for (FeatureSet f : kAllFeatureSets) {
    std::array<std::string, 3> cells{"-", "-", "-"};
    bool any = false;
    for (const ModelRow& r : rows)
      if (r.set == f) {
        std::snprintf(buf, sizeof buf, "%.4f", r.test_accuracy);
        cells[static_cast<std::size_t>(r.algorithm)] = buf;
        any = true;
      }
    if (!any) continue;
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s\n", to_string(f).c_str(), cells[0].c_str(), cells[1].c_str(),
                  cells[2].c_str());
    os << buf;
  }
  if (!rows.empty()) {
    const ModelRow& b = rows[best_row()];
    std::snprintf(buf, sizeof buf, "\nbest: %s (%.4f)\n", b.name.c_str(), b.test_accuracy);
    os << buf;
  }
  os << "\nmodel          val      test     selected\n";
  for (const ModelRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %8.4f %8.4f     ", r.name.c_str(), r.val_accuracy, r.test_accuracy);
    os << buf << format_params(r.selected) << '\n';
  }
  os << "\nper-class true/false positives (test)\n";
  std::snprintf(buf, sizeof buf, "%-12s", "model");
  os << buf;
  for (GestureState s : kAllStates) {
    std::snprintf(buf, sizeof buf, " %11s", std::string(to_string(s)).c_str());
    os << buf;
  }
  os << '\n';
  for (const ModelRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s", r.name.c_str());
    os << buf;
    for (std::size_t c = 0; c < kNumStates; ++c) {
      std::snprintf(buf, sizeof buf, " %5zu/%-5zu", r.confusion.true_positives(c), r.confusion.false_positives(c));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

double RunReport::total_seconds() const {
  double s = 0.0;
  for (const StageTiming& t : timings) s += t.seconds;
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

template <typename F>
auto in_stage(const std::string& name, RunReport& report, F&& f) {
  Stopwatch sw;
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      report.timings.push_back({name, sw.seconds()});
    } else {
      auto r = f();
      report.timings.push_back({name, sw.seconds()});
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

// Values exactly as a CSV write/read cycle would deliver them.
Recording through_csv(const Recording& rec) {
  std::stringstream ss;
  write_recording_csv(ss, rec);
  Recording r = read_recording_csv(ss, rec.id, rec.rate_hz);
  return r;
}

struct SplitFeatures {
  Eigen::MatrixXd train, val, test;
};

double selected_accuracy(const std::vector<CandidateResult>& report, std::size_t index) {
  return report.at(index).val_accuracy;
}

}  // namespace

DatasetSplit prepare_split(const PipelineConfig& cfg, const std::vector<Recording>& recordings) {
  std::vector<Recording> filtered;
  filtered.reserve(recordings.size());
  for (const Recording& r : recordings) filtered.push_back(lowpass_filter(r, cfg.window));
  return split_dataset(filtered, cfg.window, cfg.counts, derive_seed(cfg.seed, 2));
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw StageError("config", e.what());
  }
  PipelineResult res;
  RunReport& rep = res.report;
  rep.config = cfg.to_json();
  rep.seed = cfg.seed;
  auto wanted_set = [&](FeatureSet f) {
    return std::find(cfg.feature_sets.begin(), cfg.feature_sets.end(), f) != cfg.feature_sets.end();
  };
  auto wanted_alg = [&](Algorithm a) {
    return std::find(cfg.algorithms.begin(), cfg.algorithms.end(), a) != cfg.algorithms.end();
  };

  std::vector<Recording> recordings = in_stage("data", rep, [&] {
    std::vector<Recording> recs;
    if (!cfg.data_dir.empty()) {
      recs = read_dataset(cfg.data_dir, cfg.generator.rate_hz).recordings;
    } else {
      res.dataset = generate_dataset(cfg.counts, cfg.generator, derive_seed(cfg.seed, 1), cfg.window,
                                     derive_seed(cfg.seed, 2), cfg.generator_margin);
      for (Recording& r : res.dataset.recordings) r = through_csv(r);
      recs = res.dataset.recordings;
    }
    return recs;
  });

  res.split = in_stage("split", rep, [&] { return prepare_split(cfg, recordings); });
  const DatasetSplit& split = res.split;
  {
    std::array<std::size_t, kNumStates> per_class{};
    for (const Recording& r : recordings) ++per_class[static_cast<std::size_t>(ordinal(r.primary_state()))];
    json pc = json::object();
    for (GestureState s : kAllStates) pc[std::string(to_string(s))] = per_class[static_cast<std::size_t>(ordinal(s))];
    std::size_t samples = 0;
    for (const Recording& r : recordings) samples += r.size();
    rep.dataset = {{"recordings", recordings.size()},
                   {"recordings_per_state", pc},
                   {"samples", samples},
                   {"train", split.train.size()},
                   {"val", split.val.size()},
                   {"test", split.test.size()}};
  }
  const std::vector<int> ytr = labels_of(split.train), yva = labels_of(split.val), yte = labels_of(split.test);

  const bool need_manual = wanted_set(FeatureSet::Manual) || wanted_set(FeatureSet::Pca) || wanted_set(FeatureSet::Ica);
  SplitFeatures raw;
  Normalizer manual_norm;
  if (need_manual && (wanted_alg(Algorithm::Tree) || wanted_alg(Algorithm::Svm))) {
    in_stage("manual features", rep, [&] {
      const TapTemplate tpl = TapTemplate::raised_cosine();
      raw.train = extract_feature_matrix(split.train, cfg.features, tpl);
      raw.val = extract_feature_matrix(split.val, cfg.features, tpl);
      raw.test = extract_feature_matrix(split.test, cfg.features, tpl);
      manual_norm = Normalizer::fit(raw.train);
    });
  }

  // Feature chains for every reduced set.
  std::vector<FeatureChain> chains;
  json fs_info = json::object();
  if (wanted_alg(Algorithm::Tree) || wanted_alg(Algorithm::Svm)) {
    for (FeatureSet f : cfg.feature_sets) {
      if (f == FeatureSet::Raw) continue;
      FeatureChain chain;
      chain.set = f;
      chain.features = cfg.features;
      chain.manual = manual_norm;
      in_stage(to_string(f) + " fit", rep, [&] {
        if (f == FeatureSet::Pca) {
          const Eigen::MatrixXd z = manual_norm.apply(raw.train);
          const PcaTarget target =
              cfg.pca_variance > 0.0 ? PcaTarget::variance_fraction(cfg.pca_variance) : PcaTarget::fixed(cfg.pca_components);
          chain.pca = pca_fit(z, target);
          const PcaModel full = pca_fit(z, PcaTarget::fixed(static_cast<std::size_t>(z.cols())));
          double cum = 0.0;
          std::size_t k95 = 0;
          for (Eigen::Index i = 0; i < full.explained_variance_ratio.size(); ++i) {
            cum += full.explained_variance_ratio(i);
            if (k95 == 0 && cum >= 0.95) k95 = static_cast<std::size_t>(i + 1);
          }
          fs_info["pca"] = {{"components", chain.pca->k()},
                            {"explained_variance_ratio", vec_json(chain.pca->explained_variance_ratio)},
                            {"retained_variance", chain.pca->explained_variance_ratio.sum()},
                            {"components_for_95pct", k95}};
        } else if (f == FeatureSet::Ica) {
          const Eigen::MatrixXd input = manual_norm.apply(raw.train);
          IcaConfig ic = cfg.ica;
          std::size_t attempt = 0;
          // Deflation can stall on an unlucky start; retry from fresh seeded starts.
          for (;; ++attempt) {
            ic.seed = derive_seed(derive_seed(cfg.seed, 3) ^ cfg.ica.seed, attempt);
            try {
              chain.ica = ica_fit(input, ic);
              break;
            } catch (const ConvergenceError&) {
              if (attempt >= cfg.ica_restarts) throw;
            }
          }
          fs_info["ica"] = {{"components", chain.ica->k()}, {"restarts", attempt}, {"init_seed", ic.seed}};
        } else if (f == FeatureSet::Ae60 || f == FeatureSet::Ae100) {
          AutoencoderConfig ac = cfg.autoencoder;
          ac.bottleneck = f == FeatureSet::Ae60 ? 60 : 100;
          ac.seed = derive_seed(cfg.seed, ac.bottleneck) ^ cfg.autoencoder.seed;
          Autoencoder ae = train_autoencoder(split.train, split.val, ac);
          double best_val = ae.history.empty() ? 0.0 : ae.history.front().val_loss;
          for (const EpochRecord& e : ae.history) best_val = std::min(best_val, e.val_loss);
          fs_info[to_string(f)] = {
              {"bottleneck", ac.bottleneck},
              {"epochs", ac.epochs},
              {"initial_train_loss", ae.initial_train_loss},
              {"final_train_loss", ae.history.empty() ? ae.initial_train_loss : ae.history.back().train_loss},
              {"best_epoch", ae.best_epoch},
              {"best_val_loss", best_val}};
          res.encoders.emplace_back(to_string(f), ae);
          ae.decoder = nn::Sequential();
          chain.encoder = std::move(ae);
          chain.codes = Normalizer::fit(encode(*chain.encoder, split.train));
        }
      });
      chains.push_back(std::move(chain));
    }
  }

  // Classic models.
  for (const FeatureChain& chain : chains) {
    const bool manual_based = chain.set == FeatureSet::Manual || chain.set == FeatureSet::Pca || chain.set == FeatureSet::Ica;
    SplitFeatures X;
    in_stage(to_string(chain.set) + " transform", rep, [&] {
      X.train = manual_based ? chain.transform_features(raw.train) : chain.transform(split.train);
      X.val = manual_based ? chain.transform_features(raw.val) : chain.transform(split.val);
      X.test = manual_based ? chain.transform_features(raw.test) : chain.transform(split.test);
    });
    const LabeledMatrix tr{&X.train, &ytr}, va{&X.val, &yva};

    for (Algorithm alg : {Algorithm::Tree, Algorithm::Svm}) {
      if (!wanted_alg(alg)) continue;
      const std::string name = to_string(alg) + "+" + to_string(chain.set);
      in_stage(name, rep, [&] {
        TrainedModel tm;
        tm.name = name;
        tm.set = chain.set;
        tm.algorithm = alg;
        tm.window = cfg.window;
        tm.chain = chain;
        ModelRow row;
        row.name = name;
        row.set = chain.set;
        row.algorithm = alg;
        std::vector<CandidateResult> report;
        const std::uint64_t gseed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(chain.set) * 10 +
                                                               static_cast<std::uint64_t>(alg));
        if (alg == Algorithm::Tree) {
          auto g = grid_search<DecisionTree>(
              [&](const HyperParams& hp, std::uint64_t) { return tree_fit(X.train, ytr, tree_params_from(hp)); },
              [](const DecisionTree& t, const Eigen::MatrixXd& x) { return tree_predict(t, x); }, cfg.tree_grid, tr,
              va, gseed);
          row.selected = g.best_params;
          report = g.report;
          row.val_accuracy = selected_accuracy(report, g.best_index);
          tm.model = std::move(g.model);
          res.grids.emplace_back(name, cfg.tree_grid);
        } else {
          std::map<std::string, GramPtr> grams;
          auto kernel_key = [&](const SvmParams& p) {
            std::ostringstream k;
            k.precision(17);
            k << to_string(p.kernel) << '|';
            if (p.kernel != KernelType::Linear) k << p.gamma.resolve(X.train);
            return k.str();
          };
          auto g = grid_search<SvmModel>(
              [&](const HyperParams& hp, std::uint64_t) {
                const SvmParams p = svm_params_from(hp, cfg.svm_base);
                GramPtr& K = grams[kernel_key(p)];
                if (!K) {
                  const Kernel kern{p.kernel, p.gamma.resolve(X.train), p.degree, p.coef0};
                  K = std::make_shared<const Eigen::MatrixXd>(kern.gram(X.train, X.train));
                }
                return svm_fit(X.train, ytr, p, K);
              },
              [](const SvmModel& m, const Eigen::MatrixXd& x) { return svm_predict(m, x); }, cfg.svm_grid, tr, va,
              gseed, [&](const HyperParams& hp) {
                const SvmParams p = svm_params_from(hp, cfg.svm_base);
                std::ostringstream k;
                k.precision(17);
                k << p.C << '|' << kernel_key(p) << '|' << to_string(p.shape);
                return k.str();
              });
          row.selected = g.best_params;
          report = g.report;
          row.val_accuracy = selected_accuracy(report, g.best_index);
          tm.model = std::move(g.model);
          res.grids.emplace_back(name, cfg.svm_grid);
        }
        tm.selected = row.selected;
        row.candidates = report.size();
        row.failed_candidates =
            static_cast<std::size_t>(std::count_if(report.begin(), report.end(), [](const CandidateResult& c) { return !c.ok; }));
        const std::vector<int> pred = alg == Algorithm::Tree ? tree_predict(std::get<DecisionTree>(tm.model), X.test)
                                                             : svm_predict(std::get<SvmModel>(tm.model), X.test);
        row.confusion = evaluate(yte, pred);
        row.test_accuracy = row.confusion.accuracy();
        res.grid_reports.emplace_back(name, std::move(report));
        rep.rows.push_back(std::move(row));
        res.models.push_back(std::move(tm));
      });
    }
  }

  // CNN on raw snippets.
  if (wanted_set(FeatureSet::Raw) && wanted_alg(Algorithm::Cnn)) {
    in_stage("cnn+raw", rep, [&] {
      struct Cand {
        CnnConfig cfg;
        CnnClassifier model;
        double val_accuracy = 0.0;
      };
      std::vector<Cand> cands;
      std::size_t index = 0;
      json search = json::array();
      for (double lr : cfg.cnn_search.learning_rates)
        for (std::size_t filters : cfg.cnn_search.filters)
          for (double ed : cfg.cnn_search.early_dropouts)
            for (double ld : cfg.cnn_search.late_dropouts) {
              Cand c;
              c.cfg = cfg.cnn;
              c.cfg.learning_rate = lr;
              c.cfg.filters = filters;
              c.cfg.early_dropout = ed;
              c.cfg.late_dropout = ld;
              c.cfg.epochs = cfg.cnn_search.round1_epochs;
              c.cfg.seed = derive_seed(cfg.seed, 5000 + index++) ^ cfg.cnn.seed;
              c.model = train_cnn(split.train, split.val, c.cfg);
              c.val_accuracy = accuracy(predict_cnn(c.model, split.val).labels, yva);
              search.push_back({{"learning_rate", lr},
                                {"filters", filters},
                                {"early_dropout", ed},
                                {"late_dropout", ld},
                                {"val_accuracy", c.val_accuracy},
                                {"best_val_loss", c.model.best_val_loss},
                                {"best_epoch", c.model.best_epoch}});
              cands.push_back(std::move(c));
            }
      std::size_t best = 0;
      for (std::size_t i = 1; i < cands.size(); ++i)
        if (cands[i].val_accuracy > cands[best].val_accuracy) best = i;
      Cand& win = cands[best];

      CnnClassifier final_model = std::move(win.model);
      if (cfg.cnn_search.round2_epochs > 0) {
        CnnConfig r2 = win.cfg;
        r2.learning_rate = win.cfg.learning_rate / 10.0;
        r2.epochs = cfg.cnn_search.round2_epochs;
        r2.seed = derive_seed(win.cfg.seed, 2);
        final_model = train_cnn(split.train, split.val, r2, &final_model);
      }
      TrainedModel tm;
      tm.name = "cnn+raw";
      tm.set = FeatureSet::Raw;
      tm.algorithm = Algorithm::Cnn;
      tm.window = cfg.window;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%g", win.cfg.learning_rate);
      tm.selected = {{"learning_rate", buf},
                     {"filters", std::to_string(win.cfg.filters)},
                     {"early_dropout", std::to_string(win.cfg.early_dropout)},
                     {"late_dropout", std::to_string(win.cfg.late_dropout)}};
      ModelRow row;
      row.name = tm.name;
      row.set = FeatureSet::Raw;
      row.algorithm = Algorithm::Cnn;
      row.selected = tm.selected;
      row.candidates = cands.size();
      row.val_accuracy = accuracy(predict_cnn(final_model, split.val).labels, yva);
      row.confusion = evaluate(yte, predict_cnn(final_model, split.test).labels);
      row.test_accuracy = row.confusion.accuracy();
      fs_info["cnn"] = {{"search", search},
                        {"selected", best},
                        {"round2_epochs", cfg.cnn_search.round2_epochs},
                        {"best_epoch", final_model.best_epoch},
                        {"best_val_loss", final_model.best_val_loss}};
      tm.model = std::move(final_model);
      rep.rows.push_back(std::move(row));
      res.models.push_back(std::move(tm));
    });
  }
  rep.feature_sets = fs_info;
  return res;
}

void write_outputs(const std::filesystem::path& dir, const PipelineResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "confusion");
  fs::create_directories(dir / "grids");
  const RunReport& rep = result.report;
  write_text(dir / "report.json", rep.metrics_json().dump(2) + "\n");
  write_text(dir / "report.txt", rep.table_text());
  write_text(dir / "config.json", rep.config.dump(2) + "\n");
  json timing = json::array();
  for (const StageTiming& t : rep.timings) timing.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  write_text(dir / "timing.json", json({{"stages", timing}, {"total_seconds", rep.total_seconds()}}).dump(2) + "\n");

  std::ostringstream tpfp;
  tpfp << "model,state,true_positives,false_positives,support\n";
  for (const ModelRow& r : rep.rows) {
    std::ostringstream cm;
    cm << "actual\\predicted";
    for (GestureState s : kAllStates) cm << ',' << to_string(s);
    cm << '\n';
    for (std::size_t a = 0; a < kNumStates; ++a) {
      cm << to_string(state_from_ordinal(static_cast<int>(a)));
      for (std::size_t p = 0; p < kNumStates; ++p) cm << ',' << r.confusion.counts[a][p];
      cm << '\n';
      tpfp << r.name << ',' << to_string(state_from_ordinal(static_cast<int>(a))) << ','
           << r.confusion.true_positives(a) << ',' << r.confusion.false_positives(a) << ',' << r.confusion.row_sum(a)
           << '\n';
    }
    write_text(dir / "confusion" / (file_stem_for(r.name) + ".csv"), cm.str());
  }
  write_text(dir / "tpfp.csv", tpfp.str());

  for (std::size_t i = 0; i < result.grid_reports.size(); ++i)
    write_grid_report_csv((dir / "grids" / (file_stem_for(result.grid_reports[i].first) + ".csv")).string(),
                          result.grids.at(i).second, result.grid_reports[i].second);
  for (const TrainedModel& m : result.models) m.save(dir / "models" / (file_stem_for(m.name) + ".json"));
  for (const auto& [name, ae] : result.encoders) save_encoder(dir / "models" / ("encoder-" + name + ".json"), name, ae);
  if (!result.dataset.recordings.empty()) write_dataset(dir / "data", result.dataset);
}

std::vector<ModelRow> evaluate_saved_models(const std::filesystem::path& models_dir, const SnippetSet& test) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(models_dir)) throw InputError("no model directory at " + models_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(models_dir))
    if (e.path().extension() == ".json" && e.path().filename().string().rfind("encoder-", 0) != 0) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const std::vector<int> y = labels_of(test);
  std::vector<ModelRow> rows;
  for (const fs::path& p : files) {
    const TrainedModel m = TrainedModel::load(p);
    ModelRow r;
    r.name = m.name;
    r.set = m.set;
    r.algorithm = m.algorithm;
    r.selected = m.selected;
    r.confusion = evaluate(y, m.predict(test));
    r.test_accuracy = r.confusion.accuracy();
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Transitions

std::vector<TransitionEvent> infer_transitions(const std::vector<GestureState>& states, const std::vector<double>& times,
                                               std::size_t debounce) {
  if (states.size() != times.size()) throw InputError("infer_transitions: state and time counts differ");
  if (debounce == 0) throw ConfigError("debounce must be >= 1");
  std::vector<TransitionEvent> out;
  if (states.empty()) return out;
  GestureState current = states.front();
  std::size_t run_start = 0, run_len = 0;
  for (std::size_t i = 1; i < states.size(); ++i) {
    if (states[i] == current) {
      run_len = 0;
      continue;
    }
    if (run_len > 0 && states[i] == states[run_start]) {
      ++run_len;
    } else {
      run_start = i;
      run_len = 1;
    }
    if (run_len >= debounce) {
      out.push_back({run_start, times[run_start], current, states[i]});
      current = states[i];
      run_len = 0;
    }
  }
  return out;
}

}  // namespace tactile
