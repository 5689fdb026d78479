#include "tactile/nn.hpp"
#include "tactile/pipeline.hpp"
#include "tactile/spectral.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace tactile;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitGate = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> epochs;
  bool paper_scale = false;

  void attach(CLI::App* app, bool budgets) {
    app->add_option("--config", config, "pipeline configuration JSON")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "master seed (overrides the config)");
    app->add_option("--out", out, "output directory or file");
    if (budgets) {
      app->add_option("--epochs", epochs, "autoencoder and CNN epoch budget");
      app->add_flag("--paper-scale", paper_scale, "long training budgets");
    }
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : PipelineConfig::load(config);
    if (seed) cfg.seed = *seed;
    if (epochs && paper_scale) throw ConfigError("--epochs and --paper-scale are mutually exclusive");
    if (paper_scale) cfg.apply_paper_scale();
    if (epochs) cfg.apply_epochs(*epochs);
    cfg.validate();
    return cfg;
  }
};

std::vector<Recording> load_recordings(const fs::path& path, double rate) {
  if (fs::is_directory(path)) {
    if (fs::exists(path / "manifest.csv")) return read_dataset(path, rate).recordings;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Recording> out;
    for (const auto& f : files) out.push_back(read_recording_csv(f, rate));
    return out;
  }
  return {read_recording_csv(path, rate)};
}

void write_json(const std::string& out, const nlohmann::json& j) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out);
  if (!f) throw InputError("cannot write " + out);
  f << j.dump(2) << '\n';
}

int cmd_generate(const CommonFlags& flags, bool low_amp_taps) {
  PipelineConfig cfg = flags.resolve();
  if (low_amp_taps) cfg.generator = GestureParams::low_amplitude_taps();
  const fs::path dir = flags.out.empty() ? fs::path(cfg.output_dir) / "data" : fs::path(flags.out);
  const SyntheticDataset ds = generate_dataset(cfg.counts, cfg.generator, derive_seed(cfg.seed, 1), cfg.window,
                                               derive_seed(cfg.seed, 2), cfg.generator_margin);
  write_dataset(dir, ds);
  std::printf("wrote %zu recordings to %s\n", ds.recordings.size(), dir.string().c_str());
  return kExitOk;
}

int cmd_featurize(const CommonFlags& flags, const std::string& data, std::size_t spectrogram_index) {
  const PipelineConfig cfg = flags.resolve();
  const fs::path dir = flags.out.empty() ? fs::path(cfg.output_dir) / "features" : fs::path(flags.out);
  fs::create_directories(dir);
  const TapTemplate tpl = TapTemplate::raised_cosine();
  std::size_t total = 0;
  for (const Recording& raw : load_recordings(data, cfg.generator.rate_hz)) {
    const SnippetSet snippets = make_snippets(lowpass_filter(raw, cfg.window), cfg.window);
    const Eigen::MatrixXd F = extract_feature_matrix(snippets, cfg.features, tpl);
    std::ofstream f(dir / (raw.id + "_features.csv"));
    if (!f) throw InputError("cannot write features for " + raw.id);
    write_feature_csv(f, F, labels_of(snippets));
    if (spectrogram_index != static_cast<std::size_t>(-1) && spectrogram_index < snippets.size()) {
      const Spectrogram spec = spectrogram(snippets[spectrogram_index].data, cfg.features);
      for (std::size_t c = 0; c < kChannels; ++c) {
        std::ofstream s(dir / (raw.id + "_spectrogram_" + std::to_string(spectrogram_index) + "_" +
                               std::string(1, "xyz"[c]) + ".csv"));
        write_spectrogram_csv(s, spec, c);
      }
    }
    total += snippets.size();
  }
  std::printf("wrote features for %zu snippets to %s\n", total, dir.string().c_str());
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, const std::string& data, bool dry_run) {
  PipelineConfig cfg = flags.resolve();
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  if (!data.empty()) cfg.data_dir = data;
  if (dry_run) {
    std::cout << cfg.to_json().dump(2) << '\n';
    return kExitOk;
  }
  const PipelineResult result = run_pipeline(cfg);
  write_outputs(cfg.output_dir, result);
  std::cout << result.report.table_text();
  std::printf("\nwall clock %.1f s, outputs in %s\n", result.report.total_seconds(), cfg.output_dir.c_str());
  if (!result.report.gates_passed(cfg.gate_cnn, cfg.gate_all)) {
    std::fprintf(stderr, "accuracy gates not met (cnn >= %.2f, all >= %.2f)\n", cfg.gate_cnn, cfg.gate_all);
    return kExitGate;
  }
  return kExitOk;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& models, std::string data) {
  CommonFlags f = flags;
  const fs::path model_dir(models);
  const fs::path run_dir = model_dir.parent_path();
  if (f.config.empty() && fs::exists(run_dir / "config.json")) f.config = (run_dir / "config.json").string();
  const PipelineConfig cfg = f.resolve();
  if (data.empty()) data = cfg.data_dir.empty() ? (run_dir / "data").string() : cfg.data_dir;
  const DatasetSplit split = prepare_split(cfg, load_recordings(data, cfg.generator.rate_hz));
  const std::vector<ModelRow> rows = evaluate_saved_models(model_dir, split.test);
  nlohmann::json out = nlohmann::json::array();
  for (const ModelRow& r : rows)
    out.push_back({{"name", r.name}, {"test_accuracy", r.test_accuracy}, {"confusion", r.confusion.to_json()}});
  write_json(flags.out, {{"test_snippets", split.test.size()}, {"models", out}});
  return kExitOk;
}

int cmd_predict(const CommonFlags& flags, const std::string& model_path, const std::string& recording,
                std::size_t debounce) {
  const PipelineConfig cfg = flags.resolve();
  const TrainedModel model = TrainedModel::load(model_path);
  const Recording raw = read_recording_csv(fs::path(recording), cfg.generator.rate_hz);
  const SnippetSet snippets = make_snippets(lowpass_filter(raw, model.window), model.window);
  const std::vector<int> pred = model.predict(snippets);
  std::vector<GestureState> states;
  std::vector<double> times;
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    states.push_back(state_from_ordinal(pred[i]));
    times.push_back(raw.time_at(snippets[i].offset + model.window.snippet_len / 2));
    per.push_back({{"index", i}, {"time", times.back()}, {"state", to_string(states.back())},
                   {"label", to_string(snippets[i].label)}});
  }
  nlohmann::json tr = nlohmann::json::array();
  for (const TransitionEvent& e : infer_transitions(states, times, debounce))
    tr.push_back({{"index", e.index}, {"time", e.time}, {"from", to_string(e.from)}, {"to", to_string(e.to)}});
  write_json(flags.out, {{"model", model.name}, {"recording", raw.id}, {"debounce", debounce},
                         {"snippets", per}, {"transitions", tr}});
  return kExitOk;
}

int cmd_gradcheck(std::size_t configs, std::uint64_t seed) {
  bool ok = true;
  for (const nn::GradcheckResult& r : nn::run_gradcheck(configs, seed)) {
    std::printf("%-16s %3zu configs  worst rel err %.3e  %s\n", r.name.c_str(), r.configurations,
                r.worst_relative_error, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitGate;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile gesture classification pipeline"};
  app.require_subcommand(1);

  CommonFlags gen_flags, feat_flags, train_flags, eval_flags, pred_flags;
  bool low_amp = false;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset (recording CSVs and manifest)");
  gen_flags.attach(gen, false);
  gen->add_flag("--low-amplitude-taps", low_amp, "weak-tap generator preset");

  std::string feat_data;
  std::size_t spec_index = static_cast<std::size_t>(-1);
  auto* feat = app.add_subcommand("featurize", "compute manual feature CSVs for recordings");
  feat_flags.attach(feat, false);
  feat->add_option("--data", feat_data, "recording CSV or directory")->required();
  feat->add_option("--spectrogram", spec_index, "also dump the spectrogram of this snippet index");

  std::string train_data;
  bool dry_run = false;
  auto* train = app.add_subcommand("train", "run the full pipeline and write models and reports");
  train_flags.attach(train, true);
  train->add_option("--data", train_data, "dataset directory (default: generate)");
  train->add_flag("--dry-run", dry_run, "print the resolved configuration and exit");

  std::string eval_models, eval_data;
  auto* eval = app.add_subcommand("evaluate", "evaluate saved models on the test split");
  eval_flags.attach(eval, false);
  eval->add_option("--models", eval_models, "model directory of a training run")->required();
  eval->add_option("--data", eval_data, "dataset directory (default: alongside the models)");

  std::string pred_model, pred_rec;
  std::size_t debounce = 2;
  auto* pred = app.add_subcommand("predict", "per-snippet states and transitions for one recording");
  pred_flags.attach(pred, false);
  pred->add_option("--model", pred_model, "model JSON")->required()->check(CLI::ExistingFile);
  pred->add_option("--recording", pred_rec, "recording CSV")->required()->check(CLI::ExistingFile);
  pred->add_option("--debounce", debounce, "consecutive agreeing snippets before a transition");

  std::size_t gc_configs = 20;
  std::uint64_t gc_seed = 7;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every network operation");
  gc->add_option("--configs", gc_configs, "random configurations per operation");
  gc->add_option("--seed", gc_seed, "audit seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*gen) return cmd_generate(gen_flags, low_amp);
    if (*feat) return cmd_featurize(feat_flags, feat_data, spec_index);
    if (*train) return cmd_train(train_flags, train_data, dry_run);
    if (*eval) return cmd_evaluate(eval_flags, eval_models, eval_data);
    if (*pred) return cmd_predict(pred_flags, pred_model, pred_rec, debounce);
    if (*gc) return cmd_gradcheck(gc_configs, gc_seed);
  } catch (const StageError& e) {
    std::fprintf(stderr, "error in stage %s\n", e.what());
    return kExitInvalid;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalid;
  }
  return kExitInvalid;
}
