#include "tactile/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace tactile {

using nn::Context;
using nn::Mode;
using nn::Tensor;

// ---------------------------------------------------------------------------
// Input scaling

InputScaling InputScaling::fit(const SnippetSet& train) {
  if (train.empty()) throw InputError("cannot fit input scaling on an empty set");
  InputScaling s;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sq = Eigen::Vector3d::Zero();
  double count = 0.0;
  for (const Snippet& snip : train) {
    sum += snip.data.colwise().sum().transpose();
    sq += snip.data.array().square().matrix().colwise().sum().transpose();
    count += static_cast<double>(snip.data.rows());
  }
  s.mean = sum / count;
  for (int c = 0; c < 3; ++c) {
    const double var = std::max(sq(c) / count - s.mean(c) * s.mean(c), 0.0);
    s.scale(c) = var > 1e-18 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Tensor InputScaling::apply(const SnippetSet& snippets) const {
  Tensor t = nn::stack_snippets(snippets);
  for (Eigen::Index n = 0; n < t.batch(); ++n)
    for (Eigen::Index k = 0; k < t.length(); ++k)
      for (Eigen::Index c = 0; c < 3; ++c) t.at(n, k, c) = (t.at(n, k, c) - mean(c)) / scale(c);
  return t;
}

nlohmann::json InputScaling::to_json() const {
  return {{"mean", {mean(0), mean(1), mean(2)}}, {"scale", {scale(0), scale(1), scale(2)}}};
}

InputScaling InputScaling::from_json(const nlohmann::json& j) {
  InputScaling s;
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto sc = j.at("scale").get<std::vector<double>>();
  if (m.size() != 3 || sc.size() != 3) throw InputError("input scaling needs three channels");
  for (int c = 0; c < 3; ++c) {
    s.mean(c) = m[static_cast<std::size_t>(c)];
    s.scale(c) = sc[static_cast<std::size_t>(c)];
  }
  return s;
}

namespace {

Tensor gather(const Tensor& all, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Tensor out(static_cast<Eigen::Index>(end - begin), all.length(), all.channels());
  const Eigen::Index n = all.example_size();
  for (std::size_t i = begin; i < end; ++i)
    std::copy(all.example(static_cast<Eigen::Index>(idx[i])), all.example(static_cast<Eigen::Index>(idx[i])) + n,
              out.example(static_cast<Eigen::Index>(i - begin)));
  return out;
}

// Forward pass in bounded chunks to limit cached activations.
template <typename Fn>
void for_each_chunk(Eigen::Index total, Eigen::Index chunk, Fn&& fn) {
  for (Eigen::Index start = 0; start < total; start += chunk) fn(start, std::min(total, start + chunk));
}

Tensor slice(const Tensor& all, Eigen::Index begin, Eigen::Index end) {
  Tensor out(end - begin, all.length(), all.channels());
  std::copy(all.example(begin), all.example(begin) + (end - begin) * all.example_size(), out.data());
  return out;
}

constexpr Eigen::Index kEvalChunk = 256;

}  // namespace

// ---------------------------------------------------------------------------
// CNN

std::vector<double> CnnConfig::dropout_schedule() const {
  std::vector<double> d;
  for (std::size_t i = 0; i < conv_layers; ++i) d.push_back(i < early_layers ? early_dropout : late_dropout);
  return d;
}

void CnnConfig::validate() const {
  if (filters < 1 || conv_layers < 1 || kernel < 1 || stride < 1) throw ConfigError("invalid CNN topology");
  if (!(early_dropout >= 0.0 && early_dropout < 1.0) || !(late_dropout >= 0.0 && late_dropout < 1.0))
    throw ConfigError("dropout rates must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

nlohmann::json CnnConfig::to_json() const {
  return {{"filters", filters},   {"conv_layers", conv_layers},     {"kernel", kernel},
          {"stride", stride},     {"early_dropout", early_dropout}, {"late_dropout", late_dropout},
          {"early_layers", early_layers}, {"learning_rate", learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size},     {"seed", seed}};
}

CnnConfig CnnConfig::from_json(const nlohmann::json& j) {
  CnnConfig c;
  c.filters = j.value("filters", c.filters);
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.kernel = j.value("kernel", c.kernel);
  c.stride = j.value("stride", c.stride);
  c.early_dropout = j.value("early_dropout", c.early_dropout);
  c.late_dropout = j.value("late_dropout", c.late_dropout);
  c.early_layers = j.value("early_layers", c.early_layers);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

nn::Sequential build_cnn(const CnnConfig& cfg, Eigen::Index input_length) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  nn::Sequential net;
  Eigen::Index channels = 3, length = input_length;
  const auto drops = cfg.dropout_schedule();
  for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
    const std::string id = std::to_string(i + 1);
    auto& conv = net.add<nn::Conv1d>("conv" + id, channels, static_cast<Eigen::Index>(cfg.filters),
                                     static_cast<Eigen::Index>(cfg.kernel), static_cast<Eigen::Index>(cfg.stride));
    length = conv.output_length(length);
    conv.init_he(rng);
    channels = static_cast<Eigen::Index>(cfg.filters);
    net.add<nn::Relu>("relu" + id);
    net.add<nn::Dropout>("dropout" + id, drops[i]);
  }
  net.add<nn::GlobalAvgPool>("pool");
  net.add<nn::Dense>("head", channels, static_cast<Eigen::Index>(kNumStates)).init_glorot(rng);
  return net;
}

namespace {

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate_classifier(nn::Sequential& net, const Tensor& x, const std::vector<int>& y) {
  Evaluation ev;
  std::size_t correct = 0;
  const Context ctx{Mode::Inference, nullptr};
  for_each_chunk(x.batch(), kEvalChunk, [&](Eigen::Index b, Eigen::Index e) {
    const Tensor logits = net.forward(slice(x, b, e), ctx);
    for (Eigen::Index n = 0; n < logits.batch(); ++n) {
      const Eigen::Map<const Eigen::VectorXd> z(logits.example(n), logits.example_size());
      const int label = y[static_cast<std::size_t>(b + n)];
      ev.loss += nn::softmax_cross_entropy(z, label).first;
      Eigen::Index arg = 0;
      z.maxCoeff(&arg);
      if (arg == label) ++correct;
    }
  });
  ev.loss /= static_cast<double>(x.batch());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(x.batch());
  return ev;
}

}  // namespace

CnnClassifier train_cnn(const SnippetSet& train, const SnippetSet& val, const CnnConfig& cfg,
                        const CnnClassifier* warm_start) {
  if (train.empty() || val.empty()) throw InputError("train_cnn needs non-empty training and validation sets");
  cfg.validate();

  CnnClassifier model;
  model.config = cfg;
  if (warm_start != nullptr) {
    if (!warm_start->trained()) throw StateError("warm start from an untrained CNN");
    model.scaling = warm_start->scaling;
    model.net = warm_start->net;
    model.history = warm_start->history;
  } else {
    model.scaling = InputScaling::fit(train);
    model.net = build_cnn(cfg, train.front().data.rows());
  }

  const Tensor xtrain = model.scaling.apply(train);
  const Tensor xval = model.scaling.apply(val);
  const std::vector<int> ytrain = labels_of(train), yval = labels_of(val);

  std::mt19937_64 rng(cfg.seed ^ 0xC0FFEEULL);
  nn::AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  nn::Sequential best = model.net;
  Evaluation ev0 = evaluate_classifier(model.net, xval, yval);
  double best_loss = ev0.loss;
  std::size_t best_epoch = model.history.empty() ? 0 : model.history.back().epoch;
  const std::size_t epoch_base = best_epoch;

  const Context train_ctx{Mode::Train, &rng};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Tensor xb = gather(xtrain, order, start, end);
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) yb.push_back(ytrain[order[i]]);
      model.net.zero_grad();
      const nn::LossResult r = nn::softmax_cross_entropy(model.net.forward(xb, train_ctx), yb);
      model.net.backward(r.grad);
      nn::adam_step(model.net.params(), adam, cfg.learning_rate);
      loss_sum += r.loss * static_cast<double>(end - start);
    }
    const Evaluation ev = evaluate_classifier(model.net, xval, yval);
    model.history.push_back({epoch_base + epoch, loss_sum / static_cast<double>(order.size()), ev.loss, ev.accuracy});
    if (ev.loss < best_loss) {
      best_loss = ev.loss;
      best_epoch = epoch_base + epoch;
      best = model.net;
    }
  }
  model.net = std::move(best);
  model.best_epoch = best_epoch;
  model.best_val_loss = best_loss;
  return model;
}

CnnPrediction predict_cnn(const CnnClassifier& model, const SnippetSet& snippets) {
  if (!model.trained()) throw StateError("predict_cnn on an untrained model");
  CnnPrediction out;
  out.probabilities.resize(static_cast<Eigen::Index>(snippets.size()), static_cast<Eigen::Index>(kNumStates));
  if (snippets.empty()) return out;
  for (const Snippet& s : snippets)
    if (s.data.rows() != snippets.front().data.rows()) throw InputError("predict_cnn: inconsistent snippet lengths");
  const Tensor x = model.scaling.apply(snippets);
  nn::Sequential net = model.net;
  const Context ctx{Mode::Inference, nullptr};
  for_each_chunk(x.batch(), kEvalChunk, [&](Eigen::Index b, Eigen::Index e) {
    const Tensor logits = net.forward(slice(x, b, e), ctx);
    if (logits.example_size() != static_cast<Eigen::Index>(kNumStates))
      throw InputError("predict_cnn: model does not emit five classes");
    for (Eigen::Index n = 0; n < logits.batch(); ++n) {
      const Eigen::VectorXd p = nn::softmax(Eigen::Map<const Eigen::VectorXd>(logits.example(n), logits.example_size()));
      out.probabilities.row(b + n) = p.transpose();
      Eigen::Index arg = 0;
      p.maxCoeff(&arg);
      out.labels.push_back(static_cast<int>(arg));
    }
  });
  return out;
}

namespace {

nlohmann::json history_json(const std::vector<EpochRecord>& h) {
  nlohmann::json a = nlohmann::json::array();
  for (const EpochRecord& r : h)
    a.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
                 {"val_accuracy", r.val_accuracy}});
  return a;
}

std::vector<EpochRecord> history_from_json(const nlohmann::json& a) {
  std::vector<EpochRecord> h;
  for (const auto& r : a)
    h.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(), r.at("val_loss").get<double>(),
                 r.at("val_accuracy").get<double>()});
  return h;
}

}  // namespace

nlohmann::json CnnClassifier::to_json() const {
  return {{"config", config.to_json()},       {"scaling", scaling.to_json()}, {"network", net.to_json()},
          {"history", history_json(history)}, {"best_epoch", best_epoch},     {"best_val_loss", best_val_loss}};
}

CnnClassifier CnnClassifier::from_json(const nlohmann::json& j) {
  CnnClassifier m;
  m.config = CnnConfig::from_json(j.at("config"));
  m.scaling = InputScaling::from_json(j.at("scaling"));
  m.net = nn::Sequential::from_json(j.at("network"));
  m.history = history_from_json(j.value("history", nlohmann::json::array()));
  m.best_epoch = j.value("best_epoch", std::size_t{0});
  m.best_val_loss = j.value("best_val_loss", 0.0);
  return m;
}

// ---------------------------------------------------------------------------
// Autoencoder

void AutoencoderConfig::validate() const {
  if (bottleneck != 60 && bottleneck != 100)
    throw ConfigError("autoencoder bottleneck must be 60 or 100, got " + std::to_string(bottleneck));
  if (filters < 8 || kernel < 1 || kernel % 2 == 0) throw ConfigError("invalid autoencoder topology");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

nlohmann::json AutoencoderConfig::to_json() const {
  return {{"bottleneck", bottleneck}, {"filters", filters},       {"kernel", kernel},
          {"learning_rate", learning_rate}, {"epochs", epochs}, {"batch_size", batch_size},
          {"seed", seed}};
}

AutoencoderConfig AutoencoderConfig::from_json(const nlohmann::json& j) {
  AutoencoderConfig c;
  c.bottleneck = j.value("bottleneck", c.bottleneck);
  c.filters = j.value("filters", c.filters);
  c.kernel = j.value("kernel", c.kernel);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::pair<nn::Sequential, nn::Sequential> build_autoencoder(const AutoencoderConfig& cfg, Eigen::Index input_length) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto k = static_cast<Eigen::Index>(cfg.kernel);
  const Eigen::Index half = k / 2;
  const auto f = static_cast<Eigen::Index>(cfg.filters);
  const std::array<Eigen::Index, 3> widths = {f / 8, f / 4, f};

  // Encoder: three "same"-padded stride-2 convolutions, then a linear bottleneck.
  nn::Sequential enc;
  Eigen::Index channels = 3, length = input_length;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    enc.add<nn::Pad1d>("enc_pad" + id, half, half);
    auto& conv = enc.add<nn::Conv1d>("enc_conv" + id, channels, widths[i], k, 2);
    conv.init_he(rng);
    length = conv.output_length(length + 2 * half);
    channels = widths[i];
    enc.add<nn::Relu>("enc_relu" + id);
  }
  const Eigen::Index code_length = length, code_channels = channels;
  enc.add<nn::Dense>("bottleneck", code_length * code_channels, static_cast<Eigen::Index>(cfg.bottleneck))
      .init_glorot(rng);

  // Decoder mirrors it: dense, then (conv, upsample) x 3 and a linear output conv.
  nn::Sequential dec;
  dec.add<nn::Dense>("expand", static_cast<Eigen::Index>(cfg.bottleneck), code_length * code_channels)
      .init_glorot(rng);
  dec.add<nn::Relu>("dec_relu0");
  dec.add<nn::Reshape>("unflatten", code_length, code_channels);
  const std::array<Eigen::Index, 3> dec_widths = {widths[1], widths[0], widths[0]};
  channels = code_channels;
  for (std::size_t i = 0; i < dec_widths.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    dec.add<nn::Pad1d>("dec_pad" + id, half, half);
    dec.add<nn::Conv1d>("dec_conv" + id, channels, dec_widths[i], k, 1).init_he(rng);
    dec.add<nn::Relu>("dec_relu" + id);
    dec.add<nn::Upsample1d>("dec_up" + id, 2);
    channels = dec_widths[i];
  }
  dec.add<nn::Pad1d>("out_pad", half, half);
  dec.add<nn::Conv1d>("out_conv", channels, 3, k, 1).init_he(rng);
  const Eigen::Index decoded = code_length << dec_widths.size();
  if (decoded < input_length) throw ConfigError("autoencoder decoder cannot reach the input length");
  dec.add<nn::Crop1d>("crop", input_length);
  return {std::move(enc), std::move(dec)};
}

namespace {

double mse_over(nn::Sequential& enc, nn::Sequential& dec, const Tensor& x) {
  const Context ctx{Mode::Inference, nullptr};
  double total = 0.0;
  for_each_chunk(x.batch(), kEvalChunk, [&](Eigen::Index b, Eigen::Index e) {
    const Tensor xb = slice(x, b, e);
    total += nn::mse_loss(dec.forward(enc.forward(xb, ctx), ctx), xb).loss * static_cast<double>(e - b);
  });
  return total / static_cast<double>(x.batch());
}

void check_snippets(const Autoencoder& ae, const SnippetSet& snippets, const char* what, bool need_decoder = true) {
  if (ae.encoder.empty() || (need_decoder && ae.decoder.empty()))
    throw StateError(std::string(what) + " on an untrained autoencoder");
  for (const Snippet& s : snippets)
    if (s.data.rows() != ae.input_length)
      throw InputError(std::string(what) + ": snippet length " + std::to_string(s.data.rows()) + " != " +
                       std::to_string(ae.input_length));
}

}  // namespace

Autoencoder train_autoencoder(const SnippetSet& train, const SnippetSet& val, const AutoencoderConfig& cfg) {
  if (train.empty() || val.empty()) throw InputError("train_autoencoder needs non-empty training and validation sets");
  cfg.validate();
  Autoencoder ae;
  ae.config = cfg;
  ae.input_length = train.front().data.rows();
  ae.scaling = InputScaling::fit(train);
  std::tie(ae.encoder, ae.decoder) = build_autoencoder(cfg, ae.input_length);

  const Tensor xtrain = ae.scaling.apply(train);
  const Tensor xval = ae.scaling.apply(val);
  ae.initial_train_loss = mse_over(ae.encoder, ae.decoder, xtrain);

  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A5ULL);
  nn::AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  nn::Sequential best_enc = ae.encoder, best_dec = ae.decoder;
  double best_loss = mse_over(ae.encoder, ae.decoder, xval);
  const Context ctx{Mode::Train, &rng};
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Tensor xb = gather(xtrain, order, start, end);
      ae.encoder.zero_grad();
      ae.decoder.zero_grad();
      const nn::LossResult r = nn::mse_loss(ae.decoder.forward(ae.encoder.forward(xb, ctx), ctx), xb);
      ae.encoder.backward(ae.decoder.backward(r.grad));
      std::vector<nn::Param> params = ae.encoder.params();
      for (nn::Param& p : ae.decoder.params()) params.push_back(p);
      nn::adam_step(params, adam, cfg.learning_rate);
      loss_sum += r.loss * static_cast<double>(end - start);
    }
    const double vloss = mse_over(ae.encoder, ae.decoder, xval);
    ae.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), vloss, 0.0});
    if (vloss < best_loss) {
      best_loss = vloss;
      ae.best_epoch = epoch;
      best_enc = ae.encoder;
      best_dec = ae.decoder;
    }
  }
  ae.encoder = std::move(best_enc);
  ae.decoder = std::move(best_dec);
  return ae;
}

Eigen::MatrixXd encode(const Autoencoder& ae, const SnippetSet& snippets) {
  check_snippets(ae, snippets, "encode", false);
  const auto width = static_cast<Eigen::Index>(ae.config.bottleneck);
  Eigen::MatrixXd codes(static_cast<Eigen::Index>(snippets.size()), width);
  if (snippets.empty()) return codes;
  const Tensor x = ae.scaling.apply(snippets);
  nn::Sequential enc = ae.encoder;
  const Context ctx{Mode::Inference, nullptr};
  for_each_chunk(x.batch(), kEvalChunk, [&](Eigen::Index b, Eigen::Index e) {
    const Tensor z = enc.forward(slice(x, b, e), ctx);
    for (Eigen::Index n = 0; n < z.batch(); ++n)
      codes.row(b + n) = Eigen::Map<const Eigen::RowVectorXd>(z.example(n), width);
  });
  return codes;
}

std::vector<Eigen::MatrixX3d> reconstruct(const Autoencoder& ae, const SnippetSet& snippets) {
  check_snippets(ae, snippets, "reconstruct");
  std::vector<Eigen::MatrixX3d> out;
  if (snippets.empty()) return out;
  const Tensor x = ae.scaling.apply(snippets);
  nn::Sequential enc = ae.encoder, dec = ae.decoder;
  const Context ctx{Mode::Inference, nullptr};
  for_each_chunk(x.batch(), kEvalChunk, [&](Eigen::Index b, Eigen::Index e) {
    const Tensor y = dec.forward(enc.forward(slice(x, b, e), ctx), ctx);
    for (Eigen::Index n = 0; n < y.batch(); ++n) {
      Eigen::MatrixX3d m(y.length(), 3);
      for (Eigen::Index k = 0; k < y.length(); ++k)
        for (Eigen::Index c = 0; c < 3; ++c) m(k, c) = y.at(n, k, c) * ae.scaling.scale(c) + ae.scaling.mean(c);
      out.push_back(std::move(m));
    }
  });
  return out;
}

double reconstruction_mse(const Autoencoder& ae, const SnippetSet& snippets) {
  check_snippets(ae, snippets, "reconstruction_mse");
  if (snippets.empty()) throw InputError("reconstruction_mse on an empty set");
  nn::Sequential enc = ae.encoder, dec = ae.decoder;
  return mse_over(enc, dec, ae.scaling.apply(snippets));
}

nlohmann::json Autoencoder::to_json(bool include_decoder) const {
  nlohmann::json j = {{"config", config.to_json()},
                      {"scaling", scaling.to_json()},
                      {"input_length", input_length},
                      {"encoder", encoder.to_json()},
                      {"history", history_json(history)},
                      {"initial_train_loss", initial_train_loss},
                      {"best_epoch", best_epoch}};
  if (include_decoder) j["decoder"] = decoder.to_json();
  return j;
}

Autoencoder Autoencoder::from_json(const nlohmann::json& j) {
  Autoencoder ae;
  ae.config = AutoencoderConfig::from_json(j.at("config"));
  ae.scaling = InputScaling::from_json(j.at("scaling"));
  ae.input_length = j.at("input_length").get<Eigen::Index>();
  ae.encoder = nn::Sequential::from_json(j.at("encoder"));
  if (j.contains("decoder")) ae.decoder = nn::Sequential::from_json(j.at("decoder"));
  ae.history = history_from_json(j.value("history", nlohmann::json::array()));
  ae.initial_train_loss = j.value("initial_train_loss", 0.0);
  ae.best_epoch = j.value("best_epoch", std::size_t{0});
  return ae;
}

}  // namespace tactile
