#include "tactile/nn.hpp"

#include <cmath>
#include <functional>

namespace tactile::nn {

namespace {

struct Audit {
  double worst = 0.0;
  void record(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    worst = std::max(worst, (analytic - numeric).norm() / denom);
  }
};

Tensor random_tensor(std::mt19937_64& rng, Eigen::Index b, Eigen::Index l, Eigen::Index c, double margin = 0.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(b, l, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double v = u(rng);
    // Keep samples clear of kinks where the function is not differentiable.
    if (margin > 0.0 && std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
    t.data()[i] = v;
  }
  return t;
}

// Numerical gradient of scalar f with respect to the entries of `x`.
Eigen::VectorXd numeric_gradient(Tensor& x, const std::function<double()>& f, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// Checks input and parameter gradients of a layer under the loss <r, layer(x)>.
double audit_layer(Layer& layer, Tensor x, std::mt19937_64& rng, double h, std::uint64_t mask_seed) {
  auto run = [&](const Tensor& in) {
    std::mt19937_64 mask_rng(mask_seed);
    Context ctx{Mode::Train, &mask_rng};
    return layer.forward(in, ctx);
  };
  const Tensor y0 = run(x);
  const Tensor r = random_tensor(rng, y0.batch(), y0.length(), y0.channels());
  auto loss = [&]() { return run(x).flat().dot(r.flat()); };

  for (Param& p : layer.params()) p.grad->set_zero();
  run(x);
  const Tensor dx = layer.backward(r);

  Audit audit;
  audit.record(dx.flat(), numeric_gradient(x, loss, h));
  for (Param& p : layer.params()) {
    const Eigen::VectorXd analytic = p.grad->flat();
    audit.record(analytic, numeric_gradient(*p.value, loss, h));
  }
  return audit.worst;
}

template <typename Loss>
double audit_loss(Tensor x, const Loss& loss_fn, double h) {
  const LossResult r = loss_fn(x);
  Audit audit;
  audit.record(r.grad.flat(), numeric_gradient(x, [&] { return loss_fn(x).loss; }, h));
  return audit.worst;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(std::size_t configurations, std::uint64_t seed, double step,
                                           double tolerance) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> small(1, 4);
  std::uniform_int_distribution<Eigen::Index> length(6, 14);

  struct Case {
    std::string name;
    std::function<double()> run;
  };
  const std::vector<Case> cases = {
      {"conv1d",
       [&] {
         const Eigen::Index cin = small(rng), cout = small(rng);
         const Eigen::Index k = std::uniform_int_distribution<Eigen::Index>(1, 5)(rng);
         const Eigen::Index s = std::uniform_int_distribution<Eigen::Index>(1, 3)(rng);
         Conv1d conv(cin, cout, k, s);
         conv.name = "conv";
         conv.init_he(rng);
         for (Eigen::Index i = 0; i < conv.bias.size(); ++i) conv.bias.data()[i] = 0.1 * static_cast<double>(i);
         return audit_layer(conv, random_tensor(rng, small(rng), length(rng), cin), rng, step, rng());
       }},
      {"dense",
       [&] {
         const Eigen::Index l = small(rng), c = small(rng), out = small(rng) + 1;
         Dense dense(l * c, out);
         dense.name = "dense";
         dense.init_glorot(rng);
         return audit_layer(dense, random_tensor(rng, small(rng), l, c), rng, step, rng());
       }},
      {"relu",
       [&] {
         Relu relu;
         return audit_layer(relu, random_tensor(rng, small(rng), length(rng), small(rng), 0.05), rng, step, rng());
       }},
      {"dropout",
       [&] {
         Dropout drop(std::uniform_real_distribution<double>(0.0, 0.9)(rng));
         return audit_layer(drop, random_tensor(rng, small(rng), length(rng), small(rng)), rng, step, rng());
       }},
      {"pad1d",
       [&] {
         Pad1d pad(small(rng) - 1, small(rng) - 1);
         return audit_layer(pad, random_tensor(rng, small(rng), length(rng), small(rng)), rng, step, rng());
       }},
      {"crop1d",
       [&] {
         const Eigen::Index l = length(rng);
         Crop1d crop(l - small(rng) + 1);
         return audit_layer(crop, random_tensor(rng, small(rng), l, small(rng)), rng, step, rng());
       }},
      {"upsample1d",
       [&] {
         Upsample1d up(small(rng));
         return audit_layer(up, random_tensor(rng, small(rng), length(rng), small(rng)), rng, step, rng());
       }},
      {"global_avg_pool",
       [&] {
         GlobalAvgPool pool;
         return audit_layer(pool, random_tensor(rng, small(rng), length(rng), small(rng)), rng, step, rng());
       }},
      {"reshape",
       [&] {
         const Eigen::Index l = small(rng) * 2, c = small(rng);
         Reshape reshape(l / 2, c * 2);
         return audit_layer(reshape, random_tensor(rng, small(rng), l, c), rng, step, rng());
       }},
      {"softmax_cross_entropy",
       [&] {
         const Eigen::Index batch = small(rng), classes = small(rng) + 1;
         std::vector<int> labels;
         for (Eigen::Index n = 0; n < batch; ++n)
           labels.push_back(static_cast<int>(std::uniform_int_distribution<Eigen::Index>(0, classes - 1)(rng)));
         Tensor logits = random_tensor(rng, batch, 1, classes);
         logits.flat() *= 3.0;
         return audit_loss(logits, [&](const Tensor& z) { return softmax_cross_entropy(z, labels); }, step);
       }},
      {"mse",
       [&] {
         const Eigen::Index b = small(rng), l = length(rng), c = small(rng);
         const Tensor target = random_tensor(rng, b, l, c);
         return audit_loss(random_tensor(rng, b, l, c), [&](const Tensor& p) { return mse_loss(p, target); }, step);
       }},
      {"cnn_stack",
       [&] {
         // conv -> relu -> conv -> pool -> dense -> cross-entropy, end to end.
         Sequential net;
         auto& c1 = net.add<Conv1d>("c1", 3, 4, 3, 2);
         net.add<Relu>("r1");
         auto& c2 = net.add<Conv1d>("c2", 4, 4, 3, 1);
         net.add<GlobalAvgPool>("gap");
         auto& head = net.add<Dense>("head", 4, 5);
         c1.init_he(rng);
         c2.init_he(rng);
         head.init_glorot(rng);
         const Eigen::Index batch = small(rng);
         std::vector<int> labels;
         for (Eigen::Index n = 0; n < batch; ++n)
           labels.push_back(static_cast<int>(std::uniform_int_distribution<int>(0, 4)(rng)));
         Tensor x = random_tensor(rng, batch, 21, 3);
         const Context ctx{Mode::Inference, nullptr};
         auto loss = [&] { return softmax_cross_entropy(net.forward(x, ctx), labels).loss; };
         net.zero_grad();
         const LossResult r = softmax_cross_entropy(net.forward(x, ctx), labels);
         const Tensor dx = net.backward(r.grad);
         Audit audit;
         audit.record(dx.flat(), numeric_gradient(x, loss, step));
         for (Param& p : net.params()) {
           const Eigen::VectorXd analytic = p.grad->flat();
           audit.record(analytic, numeric_gradient(*p.value, loss, step));
         }
         return audit.worst;
       }},
  };

  std::vector<GradcheckResult> results;
  for (const Case& c : cases) {
    GradcheckResult res;
    res.name = c.name;
    for (std::size_t i = 0; i < configurations; ++i) {
      res.worst_relative_error = std::max(res.worst_relative_error, c.run());
      ++res.configurations;
    }
    res.passed = res.worst_relative_error <= tolerance;
    results.push_back(res);
  }
  return results;
}

}  // namespace tactile::nn
