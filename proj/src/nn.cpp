#include "tactile/nn.hpp"

#include <algorithm>
#include <cmath>

namespace tactile::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;
using StridedRowMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

Tensor::Tensor(Eigen::Index batch, Eigen::Index length, Eigen::Index channels, double fill)
    : batch_(batch), length_(length), channels_(channels),
      data_(static_cast<std::size_t>(batch * length * channels), fill) {
  if (batch < 0 || length < 0 || channels < 0) throw InputError("negative tensor dimension");
}

Tensor Tensor::reshaped(Eigen::Index length, Eigen::Index channels) const {
  if (length * channels != example_size())
    throw InputError("reshape from " + std::to_string(length_) + "x" + std::to_string(channels_) + " to " +
                     std::to_string(length) + "x" + std::to_string(channels));
  Tensor out = *this;
  out.length_ = length;
  out.channels_ = channels;
  return out;
}

void Tensor::set_zero() noexcept { std::fill(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack_snippets(const SnippetSet& snippets) {
  if (snippets.empty()) return {};
  const Eigen::Index len = snippets.front().data.rows();
  Tensor t(static_cast<Eigen::Index>(snippets.size()), len, 3);
  for (std::size_t b = 0; b < snippets.size(); ++b) {
    const auto& d = snippets[b].data;
    if (d.rows() != len) throw InputError("snippets of differing lengths cannot be batched");
    for (Eigen::Index k = 0; k < len; ++k)
      for (Eigen::Index c = 0; c < 3; ++c) t.at(static_cast<Eigen::Index>(b), k, c) = d(k, c);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(Eigen::Index in_channels, Eigen::Index out_channels, Eigen::Index kernel, Eigen::Index stride)
    : in_channels(in_channels), out_channels(out_channels), kernel(kernel), stride(stride),
      weights(1, kernel * in_channels, out_channels), bias(1, 1, out_channels),
      grad_weights(1, kernel * in_channels, out_channels), grad_bias(1, 1, out_channels) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1)
    throw ConfigError("conv1d dimensions and stride must be >= 1");
}

Eigen::Index Conv1d::output_length(Eigen::Index input_length) const {
  if (input_length < kernel)
    throw InputError("conv1d '" + name + "': kernel " + std::to_string(kernel) + " longer than input " +
                     std::to_string(input_length));
  return (input_length - kernel) / stride + 1;
}

void Conv1d::init_he(std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(kernel * in_channels));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = u(rng);
  bias.set_zero();
}

Tensor Conv1d::forward(const Tensor& x, const Context&) {
  if (x.channels() != in_channels)
    throw InputError("conv1d '" + name + "': expected " + std::to_string(in_channels) + " channels, got " +
                     std::to_string(x.channels()));
  const Eigen::Index lout = output_length(x.length());
  input_ = x;
  Tensor y(x.batch(), lout, out_channels);
  const ConstRowMap w(weights.data(), kernel * in_channels, out_channels);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), out_channels);
  for (Eigen::Index n = 0; n < x.batch(); ++n) {
    const StridedRowMap windows(x.example(n), lout, kernel * in_channels, Eigen::OuterStride<>(stride * in_channels));
    RowMap out(y.example(n), lout, out_channels);
    out.noalias() = windows * w;
    out.rowwise() += b;
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
  const Eigen::Index lout = grad_out.length();
  const Eigen::Index span = kernel * in_channels;
  Tensor dx(input_.batch(), input_.length(), in_channels);
  RowMap dw(grad_weights.data(), span, out_channels);
  Eigen::Map<Eigen::RowVectorXd> db(grad_bias.data(), out_channels);
  const ConstRowMap w(weights.data(), span, out_channels);
  RowMat dwin(lout, span);
  for (Eigen::Index n = 0; n < grad_out.batch(); ++n) {
    const StridedRowMap windows(input_.example(n), lout, span, Eigen::OuterStride<>(stride * in_channels));
    const ConstRowMap go(grad_out.example(n), lout, out_channels);
    dw.noalias() += windows.transpose() * go;
    db += go.colwise().sum();
    dwin.noalias() = go * w.transpose();
    double* dst = dx.example(n);
    for (Eigen::Index t = 0; t < lout; ++t) {
      double* row = dst + t * stride * in_channels;
      for (Eigen::Index j = 0; j < span; ++j) row[j] += dwin(t, j);
    }
  }
  return dx;
}

std::vector<Param> Conv1d::params() {
  return {{name + ".weights", &weights, &grad_weights}, {name + ".bias", &bias, &grad_bias}};
}

nlohmann::json Conv1d::config() const {
  return {{"in_channels", in_channels}, {"out_channels", out_channels}, {"kernel", kernel}, {"stride", stride}};
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(Eigen::Index inputs, Eigen::Index outputs)
    : inputs(inputs), outputs(outputs), weights(1, inputs, outputs), bias(1, 1, outputs),
      grad_weights(1, inputs, outputs), grad_bias(1, 1, outputs) {
  if (inputs < 1 || outputs < 1) throw ConfigError("dense dimensions must be >= 1");
}

void Dense::init_glorot(std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = u(rng);
  bias.set_zero();
}

Tensor Dense::forward(const Tensor& x, const Context&) {
  if (x.example_size() != inputs)
    throw InputError("dense '" + name + "': expected " + std::to_string(inputs) + " inputs, got " +
                     std::to_string(x.example_size()));
  input_ = x;
  Tensor y(x.batch(), 1, outputs);
  const ConstRowMap in(x.data(), x.batch(), inputs);
  const ConstRowMap w(weights.data(), inputs, outputs);
  RowMap out(y.data(), x.batch(), outputs);
  out.noalias() = in * w;
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), outputs);
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  const Eigen::Index batch = grad_out.batch();
  const ConstRowMap in(input_.data(), batch, inputs);
  const ConstRowMap go(grad_out.data(), batch, outputs);
  const ConstRowMap w(weights.data(), inputs, outputs);
  RowMap(grad_weights.data(), inputs, outputs).noalias() += in.transpose() * go;
  Eigen::Map<Eigen::RowVectorXd>(grad_bias.data(), outputs) += go.colwise().sum();
  Tensor dx(batch, input_.length(), input_.channels());
  RowMap(dx.data(), batch, inputs).noalias() = go * w.transpose();
  return dx;
}

std::vector<Param> Dense::params() {
  return {{name + ".weights", &weights, &grad_weights}, {name + ".bias", &bias, &grad_bias}};
}

nlohmann::json Dense::config() const { return {{"inputs", inputs}, {"outputs", outputs}}; }

// ---------------------------------------------------------------------------
// Elementwise and shape layers

Tensor Relu::forward(const Tensor& x, const Context&) {
  input_ = x;
  Tensor y = x;
  y.flat() = y.flat().cwiseMax(0.0);
  return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
  Tensor dx = grad_out;
  dx.flat() = (input_.flat().array() > 0.0).select(grad_out.flat(), 0.0);
  return dx;
}

Dropout::Dropout(double rate) : rate(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, const Context& ctx) {
  active_ = ctx.mode == Mode::Train && rate > 0.0;
  if (!active_) return x;
  if (ctx.rng == nullptr) throw StateError("dropout in training mode needs a random generator");
  mask_ = Tensor(x.batch(), x.length(), x.channels());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = u(*ctx.rng) >= rate ? keep_scale : 0.0;
  Tensor y = x;
  y.flat().array() *= mask_.flat().array();
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (!active_) return grad_out;
  Tensor dx = grad_out;
  dx.flat().array() *= mask_.flat().array();
  return dx;
}

Tensor Pad1d::forward(const Tensor& x, const Context&) {
  Tensor y(x.batch(), x.length() + left + right, x.channels());
  for (Eigen::Index n = 0; n < x.batch(); ++n)
    std::copy(x.example(n), x.example(n) + x.example_size(), y.example(n) + left * x.channels());
  return y;
}

Tensor Pad1d::backward(const Tensor& grad_out) {
  const Eigen::Index len = grad_out.length() - left - right;
  Tensor dx(grad_out.batch(), len, grad_out.channels());
  for (Eigen::Index n = 0; n < grad_out.batch(); ++n) {
    const double* src = grad_out.example(n) + left * grad_out.channels();
    std::copy(src, src + dx.example_size(), dx.example(n));
  }
  return dx;
}

Tensor Crop1d::forward(const Tensor& x, const Context&) {
  if (x.length() < length) throw InputError("crop1d: input shorter than the crop length");
  input_length_ = x.length();
  Tensor y(x.batch(), length, x.channels());
  for (Eigen::Index n = 0; n < x.batch(); ++n)
    std::copy(x.example(n), x.example(n) + y.example_size(), y.example(n));
  return y;
}

Tensor Crop1d::backward(const Tensor& grad_out) {
  Tensor dx(grad_out.batch(), input_length_, grad_out.channels());
  for (Eigen::Index n = 0; n < grad_out.batch(); ++n)
    std::copy(grad_out.example(n), grad_out.example(n) + grad_out.example_size(), dx.example(n));
  return dx;
}

Tensor Upsample1d::forward(const Tensor& x, const Context&) {
  if (factor < 1) throw ConfigError("upsample factor must be >= 1");
  Tensor y(x.batch(), x.length() * factor, x.channels());
  for (Eigen::Index n = 0; n < x.batch(); ++n)
    for (Eigen::Index t = 0; t < y.length(); ++t)
      for (Eigen::Index c = 0; c < x.channels(); ++c) y.at(n, t, c) = x.at(n, t / factor, c);
  return y;
}

Tensor Upsample1d::backward(const Tensor& grad_out) {
  Tensor dx(grad_out.batch(), grad_out.length() / factor, grad_out.channels());
  for (Eigen::Index n = 0; n < grad_out.batch(); ++n)
    for (Eigen::Index t = 0; t < grad_out.length(); ++t)
      for (Eigen::Index c = 0; c < grad_out.channels(); ++c) dx.at(n, t / factor, c) += grad_out.at(n, t, c);
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, const Context&) {
  input_length_ = x.length();
  Tensor y(x.batch(), 1, x.channels());
  for (Eigen::Index n = 0; n < x.batch(); ++n) {
    const ConstRowMap in(x.example(n), x.length(), x.channels());
    Eigen::Map<Eigen::RowVectorXd>(y.example(n), x.channels()) = in.colwise().mean();
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor dx(grad_out.batch(), input_length_, grad_out.channels());
  const double inv = 1.0 / static_cast<double>(input_length_);
  for (Eigen::Index n = 0; n < grad_out.batch(); ++n)
    for (Eigen::Index t = 0; t < input_length_; ++t)
      for (Eigen::Index c = 0; c < grad_out.channels(); ++c) dx.at(n, t, c) = grad_out.at(n, 0, c) * inv;
  return dx;
}

Tensor Reshape::forward(const Tensor& x, const Context&) {
  in_length_ = x.length();
  in_channels_ = x.channels();
  return x.reshaped(length, channels);
}

Tensor Reshape::backward(const Tensor& grad_out) { return grad_out.reshaped(in_length_, in_channels_); }

// ---------------------------------------------------------------------------
// Sequential

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    layers_ = std::move(copy.layers_);
  }
  return *this;
}

Tensor Sequential::forward(const Tensor& x, const Context& ctx) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, ctx);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param> Sequential::params() {
  std::vector<Param> out;
  for (auto& l : layers_)
    for (Param& p : l->params()) out.push_back(p);
  return out;
}

void Sequential::zero_grad() {
  for (Param& p : params()) p.grad->set_zero();
}

std::size_t Sequential::parameter_count() {
  std::size_t n = 0;
  for (Param& p : params()) n += static_cast<std::size_t>(p.value->size());
  return n;
}

namespace {

nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", {t.batch(), t.length(), t.channels()}},
          {"values", std::vector<double>(t.data(), t.data() + t.size())}};
}

void load_tensor(const nlohmann::json& j, Tensor& t, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 3 || shape[0] != t.batch() || shape[1] != t.length() || shape[2] != t.channels() ||
      static_cast<Eigen::Index>(values.size()) != t.size())
    throw InputError("parameter '" + what + "' has an unexpected shape");
  std::copy(values.begin(), values.end(), t.data());
}

}  // namespace

nlohmann::json Sequential::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    nlohmann::json entry = {{"type", l->type()}, {"name", l->name}, {"config", l->config()}};
    nlohmann::json params = nlohmann::json::object();
    for (const Param& p : const_cast<Layer&>(*l).params())
      params[p.name.substr(l->name.size() + 1)] = tensor_json(*p.value);
    if (!params.empty()) entry["params"] = std::move(params);
    layers.push_back(std::move(entry));
  }
  return {{"layers", std::move(layers)}};
}

Sequential Sequential::from_json(const nlohmann::json& j) {
  Sequential net;
  for (const auto& entry : j.at("layers")) {
    const auto type = entry.at("type").get<std::string>();
    const auto name = entry.at("name").get<std::string>();
    const auto& cfg = entry.at("config");
    Layer* added = nullptr;
    if (type == "conv1d") {
      added = &net.add<Conv1d>(name, cfg.at("in_channels").get<Eigen::Index>(),
                               cfg.at("out_channels").get<Eigen::Index>(), cfg.at("kernel").get<Eigen::Index>(),
                               cfg.at("stride").get<Eigen::Index>());
    } else if (type == "dense") {
      added = &net.add<Dense>(name, cfg.at("inputs").get<Eigen::Index>(), cfg.at("outputs").get<Eigen::Index>());
    } else if (type == "relu") {
      added = &net.add<Relu>(name);
    } else if (type == "dropout") {
      added = &net.add<Dropout>(name, cfg.at("rate").get<double>());
    } else if (type == "pad1d") {
      added = &net.add<Pad1d>(name, cfg.at("left").get<Eigen::Index>(), cfg.at("right").get<Eigen::Index>());
    } else if (type == "crop1d") {
      added = &net.add<Crop1d>(name, cfg.at("length").get<Eigen::Index>());
    } else if (type == "upsample1d") {
      added = &net.add<Upsample1d>(name, cfg.at("factor").get<Eigen::Index>());
    } else if (type == "global_avg_pool") {
      added = &net.add<GlobalAvgPool>(name);
    } else if (type == "reshape") {
      added = &net.add<Reshape>(name, cfg.at("length").get<Eigen::Index>(), cfg.at("channels").get<Eigen::Index>());
    } else {
      throw InputError("unknown layer type '" + type + "'");
    }
    for (const Param& p : added->params()) {
      const std::string key = p.name.substr(name.size() + 1);
      if (!entry.contains("params") || !entry["params"].contains(key))
        throw InputError("layer '" + name + "' is missing parameter '" + key + "'");
      load_tensor(entry["params"][key], *p.value, p.name);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Losses

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

std::pair<double, Eigen::VectorXd> softmax_cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits,
                                                         int label) {
  if (label < 0 || label >= logits.size()) throw InputError("label out of range for logits");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  Eigen::VectorXd grad = (logits.array() - lse).exp();
  grad(label) -= 1.0;
  return {lse - logits(label), grad};
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(logits.batch()) != labels.size())
    throw InputError("logit batch and label count differ");
  LossResult r;
  r.grad = Tensor(logits.batch(), logits.length(), logits.channels());
  const Eigen::Index k = logits.example_size();
  const double inv = 1.0 / static_cast<double>(logits.batch());
  for (Eigen::Index n = 0; n < logits.batch(); ++n) {
    const Eigen::Map<const Eigen::VectorXd> z(logits.example(n), k);
    auto [loss, g] = softmax_cross_entropy(z, labels[static_cast<std::size_t>(n)]);
    r.loss += loss * inv;
    Eigen::Map<Eigen::VectorXd>(r.grad.example(n), k) = g * inv;
  }
  return r;
}

LossResult mse_loss(const Tensor& prediction, const Tensor& target) {
  if (!prediction.same_shape(target)) throw InputError("mse: prediction and target shapes differ");
  LossResult r;
  r.grad = prediction;
  const double inv = 1.0 / static_cast<double>(prediction.size());
  const Eigen::VectorXd diff = prediction.flat() - target.flat();
  r.loss = diff.squaredNorm() * inv;
  r.grad.flat() = 2.0 * inv * diff;
  return r;
}

// ---------------------------------------------------------------------------
// Adam

namespace {

void ensure_moments(AdamState& state, const std::vector<Eigen::Index>& sizes) {
  if (state.first_moment.empty()) {
    for (Eigen::Index n : sizes) {
      state.first_moment.push_back(Eigen::VectorXd::Zero(n));
      state.second_moment.push_back(Eigen::VectorXd::Zero(n));
    }
  }
  if (state.first_moment.size() != sizes.size()) throw InputError("adam: state does not match parameters");
}

template <typename P, typename G>
void adam_update(P&& p, const G& g, Eigen::VectorXd& m, Eigen::VectorXd& v, const AdamState& state,
                 double lr, double c1, double c2) {
  m = state.beta1 * m + (1.0 - state.beta1) * g;
  v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
  p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
}

}  // namespace

void adam_step(std::vector<Eigen::VectorXd*> params, const std::vector<const Eigen::VectorXd*>& grads,
               AdamState& state, double learning_rate) {
  if (params.size() != grads.size()) throw InputError("adam: parameter and gradient counts differ");
  std::vector<Eigen::Index> sizes;
  for (auto* p : params) sizes.push_back(p->size());
  ensure_moments(state, sizes);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->size() != params[i]->size() || state.first_moment[i].size() != params[i]->size())
      throw InputError("adam: shape mismatch for parameter " + std::to_string(i));
    adam_update(*params[i], *grads[i], state.first_moment[i], state.second_moment[i], state, learning_rate, c1, c2);
  }
}

void adam_step(const std::vector<Param>& params, AdamState& state, double learning_rate) {
  std::vector<Eigen::Index> sizes;
  for (const Param& p : params) sizes.push_back(p.value->size());
  ensure_moments(state, sizes);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].grad->size() != params[i].value->size() ||
        state.first_moment[i].size() != params[i].value->size())
      throw InputError("adam: shape mismatch for " + params[i].name);
    adam_update(params[i].value->flat(), params[i].grad->flat(), state.first_moment[i], state.second_moment[i],
                state, learning_rate, c1, c2);
  }
}

}  // namespace tactile::nn
