#pragma once

#include "tactile/types.hpp"

#include <json.hpp>

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace tactile::nn {

/// Dense (batch x length x channels) payload, row-major with channels fastest.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Eigen::Index batch, Eigen::Index length, Eigen::Index channels, double fill = 0.0);

  Eigen::Index batch() const noexcept { return batch_; }
  Eigen::Index length() const noexcept { return length_; }
  Eigen::Index channels() const noexcept { return channels_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(data_.size()); }
  /// Features per example (length * channels).
  Eigen::Index example_size() const noexcept { return length_ * channels_; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  double* example(Eigen::Index b) noexcept { return data_.data() + b * example_size(); }
  const double* example(Eigen::Index b) const noexcept { return data_.data() + b * example_size(); }

  double& at(Eigen::Index b, Eigen::Index t, Eigen::Index c) noexcept {
    return data_[static_cast<std::size_t>((b * length_ + t) * channels_ + c)];
  }
  double at(Eigen::Index b, Eigen::Index t, Eigen::Index c) const noexcept {
    return data_[static_cast<std::size_t>((b * length_ + t) * channels_ + c)];
  }

  Eigen::Map<Eigen::VectorXd> flat() noexcept { return {data_.data(), size()}; }
  Eigen::Map<const Eigen::VectorXd> flat() const noexcept { return {data_.data(), size()}; }

  /// Same payload, new per-example shape (length * channels must be preserved).
  Tensor reshaped(Eigen::Index length, Eigen::Index channels) const;
  void set_zero() noexcept;
  bool same_shape(const Tensor& o) const noexcept {
    return batch_ == o.batch_ && length_ == o.length_ && channels_ == o.channels_;
  }
  bool all_finite() const noexcept;

 private:
  Eigen::Index batch_ = 0, length_ = 0, channels_ = 0;
  // Aligned storage keeps vectorized reductions in a fixed summation order.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

/// Stacks snippets into a (n x L x 3) tensor.
Tensor stack_snippets(const SnippetSet& snippets);

enum class Mode { Train, Inference };

struct Context {
  Mode mode = Mode::Inference;
  std::mt19937_64* rng = nullptr;  // required by dropout in training mode
};

/// A learnable parameter and its gradient accumulator.
struct Param {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string type() const = 0;

  /// Caches whatever backward needs.
  virtual Tensor forward(const Tensor& x, const Context& ctx) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<Param> params() { return {}; }
  virtual nlohmann::json config() const { return nlohmann::json::object(); }
  virtual std::unique_ptr<Layer> clone() const = 0;

  std::string name;
};

/// Valid cross-correlation: kernels (K x Cin x Cout), bias (Cout).
class Conv1d final : public Layer {
 public:
  Conv1d(Eigen::Index in_channels, Eigen::Index out_channels, Eigen::Index kernel, Eigen::Index stride = 1);
  std::string type() const override { return "conv1d"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param> params() override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }

  void init_he(std::mt19937_64& rng);
  Eigen::Index output_length(Eigen::Index input_length) const;

  Eigen::Index in_channels, out_channels, kernel, stride;
  Tensor weights;  // shape (1, K * Cin, Cout)
  Tensor bias;     // shape (1, 1, Cout)
  Tensor grad_weights, grad_bias;

 private:
  Tensor input_;
};

/// Affine map over the flattened example: weights (D x O), bias (O).
class Dense final : public Layer {
 public:
  Dense(Eigen::Index inputs, Eigen::Index outputs);
  std::string type() const override { return "dense"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Param> params() override;
  nlohmann::json config() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  void init_glorot(std::mt19937_64& rng);

  Eigen::Index inputs, outputs;
  Tensor weights;  // shape (1, D, O)
  Tensor bias;     // shape (1, 1, O)
  Tensor grad_weights, grad_bias;

 private:
  Tensor input_;
};

class Relu final : public Layer {
 public:
  std::string type() const override { return "relu"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  Tensor input_;
};

/// Inverted dropout: survivors scaled by 1 / (1 - rate) in training, identity at inference.
class Dropout final : public Layer {
 public:
  explicit Dropout(double rate);
  std::string type() const override { return "dropout"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json config() const override { return {{"rate", rate}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

  double rate;

 private:
  Tensor mask_;
  bool active_ = false;
};

/// Zero padding along the length axis.
class Pad1d final : public Layer {
 public:
  Pad1d(Eigen::Index left, Eigen::Index right) : left(left), right(right) {}
  std::string type() const override { return "pad1d"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json config() const override { return {{"left", left}, {"right", right}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Pad1d>(*this); }
  Eigen::Index left, right;
};

/// Keeps the first `length` samples.
class Crop1d final : public Layer {
 public:
  explicit Crop1d(Eigen::Index length) : length(length) {}
  std::string type() const override { return "crop1d"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json config() const override { return {{"length", length}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Crop1d>(*this); }
  Eigen::Index length;

 private:
  Eigen::Index input_length_ = 0;
};

/// Nearest-neighbour upsampling along length.
class Upsample1d final : public Layer {
 public:
  explicit Upsample1d(Eigen::Index factor) : factor(factor) {}
  std::string type() const override { return "upsample1d"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json config() const override { return {{"factor", factor}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Upsample1d>(*this); }
  Eigen::Index factor;
};

/// Mean over the length axis: (B, L, C) -> (B, 1, C).
class GlobalAvgPool final : public Layer {
 public:
  std::string type() const override { return "global_avg_pool"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

 private:
  Eigen::Index input_length_ = 0;
};

/// Reinterprets each example as (length x channels).
class Reshape final : public Layer {
 public:
  Reshape(Eigen::Index length, Eigen::Index channels) : length(length), channels(channels) {}
  std::string type() const override { return "reshape"; }
  Tensor forward(const Tensor& x, const Context& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json config() const override { return {{"length", length}, {"channels", channels}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(*this); }
  Eigen::Index length, channels;

 private:
  Eigen::Index in_length_ = 0, in_channels_ = 0;
};

/// Ordered stack of layers.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    layer->name = std::move(name);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, const Context& ctx);
  Tensor backward(const Tensor& grad_out);
  std::vector<Param> params();
  void zero_grad();
  std::size_t parameter_count();
  bool empty() const noexcept { return layers_.empty(); }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  /// Self-describing layout: layer types, names, config, parameter shapes and
  /// row-major values.
  nlohmann::json to_json() const;
  static Sequential from_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// --- losses ------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d(mean loss) / d(input)
};

/// Stable softmax of a logit row.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Single example: loss and gradient (softmax - one_hot).
std::pair<double, Eigen::VectorXd> softmax_cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits,
                                                         int label);

/// Batch mean of the cross-entropy over logits shaped (B, 1, K).
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Mean squared error over all elements.
LossResult mse_loss(const Tensor& prediction, const Tensor& target);

// --- optimizer -------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Eigen::VectorXd> first_moment;
  std::vector<Eigen::VectorXd> second_moment;
};

/// One bias-corrected Adam update applied to every parameter in place.
void adam_step(const std::vector<Param>& params, AdamState& state, double learning_rate);

/// Same update over plain vectors.
void adam_step(std::vector<Eigen::VectorXd*> params, const std::vector<const Eigen::VectorXd*>& grads,
               AdamState& state, double learning_rate);

// --- gradient audit ---------------------------------------------------------

struct GradcheckResult {
  std::string name;
  std::size_t configurations = 0;
  double worst_relative_error = 0.0;
  bool passed = false;
};

/// Central finite-difference audit of every differentiable operation (conv1d,
/// dense, relu, pooling, padding, crop, upsample, reshape, dropout with a fixed
/// mask, softmax cross-entropy, mse) over `configurations` random shapes.
std::vector<GradcheckResult> run_gradcheck(std::size_t configurations = 20, std::uint64_t seed = 7,
                                           double step = 1e-4, double tolerance = 1e-4);

}  // namespace tactile::nn
