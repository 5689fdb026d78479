#pragma once

#include "tactile/nn.hpp"
#include "tactile/types.hpp"

#include <cstdint>
#include <vector>

namespace tactile {

/// Per-channel affine input scaling fitted on training snippets.
struct InputScaling {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();

  static InputScaling fit(const SnippetSet& train);
  nn::Tensor apply(const SnippetSet& snippets) const;
  nlohmann::json to_json() const;
  static InputScaling from_json(const nlohmann::json& j);
};

/// Loss/accuracy trace of one training run.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

// ---------------------------------------------------------------------------
// CNN classifier
// ---------------------------------------------------------------------------

struct CnnConfig {
  std::size_t filters = 16;
  std::size_t conv_layers = 5;
  std::size_t kernel = 5;
  std::size_t stride = 2;
  /// Rate after the first `early_layers` convolutions, then `late_dropout`.
  double early_dropout = 0.5;
  double late_dropout = 0.1;
  std::size_t early_layers = 3;
  double learning_rate = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  std::vector<double> dropout_schedule() const;
  void validate() const;
  nlohmann::json to_json() const;
  static CnnConfig from_json(const nlohmann::json& j);
};

struct CnnClassifier {
  CnnConfig config;
  InputScaling scaling;
  nn::Sequential net;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;

  bool trained() const noexcept { return !net.empty(); }
  nlohmann::json to_json() const;
  static CnnClassifier from_json(const nlohmann::json& j);
};

/// Builds the convolution stack (conv -> relu -> dropout per layer, global
/// average pooling, 5-way dense head) with seeded initialisation.
nn::Sequential build_cnn(const CnnConfig& cfg, Eigen::Index input_length);

/// Adam training with per-epoch validation; the returned model carries the
/// weights of the lowest validation loss. `warm_start` continues from an
/// existing model (its scaling and architecture are kept).
CnnClassifier train_cnn(const SnippetSet& train, const SnippetSet& val, const CnnConfig& cfg,
                        const CnnClassifier* warm_start = nullptr);

struct CnnPrediction {
  std::vector<int> labels;
  Eigen::MatrixXd probabilities;  // n x 5
};

/// Dropout-free inference.
CnnPrediction predict_cnn(const CnnClassifier& model, const SnippetSet& snippets);

// ---------------------------------------------------------------------------
// Convolutional autoencoder
// ---------------------------------------------------------------------------

struct AutoencoderConfig {
  std::size_t bottleneck = 100;  // 60 or 100
  std::size_t filters = 128;     // widest encoder layer; earlier layers use filters/8, filters/4
  std::size_t kernel = 5;
  double learning_rate = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AutoencoderConfig from_json(const nlohmann::json& j);
};

struct Autoencoder {
  AutoencoderConfig config;
  InputScaling scaling;
  Eigen::Index input_length = 0;
  nn::Sequential encoder;
  nn::Sequential decoder;
  std::vector<EpochRecord> history;  // val_accuracy unused
  double initial_train_loss = 0.0;
  std::size_t best_epoch = 0;

  bool trained() const noexcept { return !encoder.empty() && !decoder.empty(); }
  nlohmann::json to_json(bool include_decoder = true) const;
  static Autoencoder from_json(const nlohmann::json& j);
};

/// Encoder and decoder stacks for an input of `input_length` x 3.
std::pair<nn::Sequential, nn::Sequential> build_autoencoder(const AutoencoderConfig& cfg, Eigen::Index input_length);

/// MSE reconstruction training on scaled snippets, keeping the lowest
/// validation loss weights.
Autoencoder train_autoencoder(const SnippetSet& train, const SnippetSet& val, const AutoencoderConfig& cfg);

/// Bottleneck vectors (n x bottleneck).
Eigen::MatrixXd encode(const Autoencoder& ae, const SnippetSet& snippets);

/// Reconstructions in the original force units.
std::vector<Eigen::MatrixX3d> reconstruct(const Autoencoder& ae, const SnippetSet& snippets);

/// Mean squared reconstruction error in scaled units.
double reconstruction_mse(const Autoencoder& ae, const SnippetSet& snippets);

}  // namespace tactile
