#include "setgan/layers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <type_traits>

#include "json.hpp"

namespace setgan {

Var apply_activation(Var x, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return relu(x);
    case Activation::kLeakyRelu:
      return leaky_relu(x, kLeakySlope);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kTanh:
      return tanh(x);
  }
  return x;
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  for (Activation a : {Activation::kIdentity, Activation::kRelu, Activation::kLeakyRelu,
                       Activation::kSigmoid, Activation::kTanh})
    if (activation_name(a) == name) return a;
  throw ContractError("unknown activation '" + name + "'");
}

void init_glorot_uniform(Tensor& weights, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& w : weights.data()) w = dist(rng);
}

void set_requires_grad(const NamedTensors& params, bool on) {
  for (const auto& [name, t] : params) t->set_requires_grad(on);
}

// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng)
    : weights(Shape{in, out}), bias(Shape{out}), activation(act) {
  init_glorot_uniform(weights, in, out, rng);
  weights.set_requires_grad(true);
  bias.set_requires_grad(true);
}

Var DenseLayer::forward(Tape& tape, Var x) {
  if (x.value().rank() != 2 || x.value().dim(1) != in_width())
    throw DimensionError("dense: expected input width " + std::to_string(in_width()) + ", got " +
                         shape_string(x.shape()));
  Var z = affine(x, tape.parameter(weights), tape.parameter(bias));
  return apply_activation(z, activation);
}

void DenseLayer::collect(const std::string& prefix, NamedTensors& params, NamedTensors&) {
  params.emplace_back(prefix + "weights", &weights);
  params.emplace_back(prefix + "bias", &bias);
}

MaxoutLayer::MaxoutLayer(std::size_t in, std::size_t out, std::size_t pieces, Rng& rng)
    : weights(Shape{in, out, pieces}), bias(Shape{out, pieces}) {
  if (pieces < 1) throw ContractError("maxout needs at least one piece");
  init_glorot_uniform(weights, in, out, rng);
  weights.set_requires_grad(true);
  bias.set_requires_grad(true);
}

Var MaxoutLayer::forward(Tape& tape, Var x) {
  if (x.value().rank() != 2 || x.value().dim(1) != in_width())
    throw DimensionError("maxout: expected input width " + std::to_string(in_width()) + ", got " +
                         shape_string(x.shape()));
  const std::size_t batch = x.value().dim(0);
  const std::size_t out = out_width(), p = pieces();
  Var w = reshape(tape.parameter(weights), Shape{in_width(), out * p});
  Var b = reshape(tape.parameter(bias), Shape{out * p});
  Var z = affine(x, w, b);
  return max(reshape(z, Shape{batch, out, p}), 2);
}

void MaxoutLayer::collect(const std::string& prefix, NamedTensors& params, NamedTensors&) {
  params.emplace_back(prefix + "weights", &weights);
  params.emplace_back(prefix + "bias", &bias);
}

BatchNormLayer::BatchNormLayer(std::size_t features, Activation act)
    : gamma(Shape{features}, 1.0),
      beta(Shape{features}, 0.0),
      running_mean(Shape{features}, 0.0),
      running_var(Shape{features}, 1.0),
      activation(act) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

Var BatchNormLayer::forward(Tape& tape, Var x, Mode mode) {
  const Tensor& in = x.value();
  const std::size_t n = width();
  if (in.rank() != 2 || in.dim(1) != n)
    throw DimensionError("batchnorm: expected input width " + std::to_string(n) + ", got " +
                         shape_string(in.shape()));
  const std::size_t batch = in.dim(0);

  std::vector<double> mu(n, 0.0), var(n, 0.0);
  if (mode == Mode::kTrain) {
    if (batch < 2) throw ContractError("batchnorm: train mode needs a batch of at least 2");
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < n; ++c) mu[c] += in[r * n + c];
    for (double& m : mu) m /= static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const double d = in[r * n + c] - mu[c];
        var[c] += d * d;
      }
    const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    for (std::size_t c = 0; c < n; ++c) {
      var[c] /= static_cast<double>(batch);
      running_mean[c] = kMomentum * running_mean[c] + (1.0 - kMomentum) * mu[c];
      running_var[c] = kMomentum * running_var[c] + (1.0 - kMomentum) * var[c] * unbias;
    }
  } else {
    std::copy(running_mean.data().begin(), running_mean.data().end(), mu.begin());
    std::copy(running_var.data().begin(), running_var.data().end(), var.begin());
  }

  std::vector<double> inv_std(n);
  for (std::size_t c = 0; c < n; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kEpsilon);

  Tensor normalized(in.shape());
  Tensor out(in.shape());
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t i = r * n + c;
      normalized[i] = (in[i] - mu[c]) * inv_std[c];
      out[i] = normalized[i] * gamma[c] + beta[c];
    }

  const bool batch_stats = mode == Mode::kTrain;
  Var y = tape.record(
      std::move(out), {x, tape.parameter(gamma), tape.parameter(beta)},
      [normalized = std::move(normalized), inv_std = std::move(inv_std), batch, n,
       batch_stats](const BackwardContext& ctx) {
        auto g = ctx.out_grad();
        const Tensor& gam = ctx.input(1);
        std::vector<double> sum_g(n, 0.0), sum_gx(n, 0.0);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            sum_g[c] += g[r * n + c];
            sum_gx[c] += g[r * n + c] * normalized[r * n + c];
          }
        if (ctx.needs_grad(1))
          for (std::size_t c = 0; c < n; ++c) ctx.input_grad(1)[c] += sum_gx[c];
        if (ctx.needs_grad(2))
          for (std::size_t c = 0; c < n; ++c) ctx.input_grad(2)[c] += sum_g[c];
        if (!ctx.needs_grad(0)) return;
        auto gx = ctx.input_grad(0);
        const double inv_n = 1.0 / static_cast<double>(batch);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            const std::size_t i = r * n + c;
            if (batch_stats)
              gx[i] += gam[c] * inv_std[c] *
                       (g[i] - inv_n * sum_g[c] - normalized[i] * inv_n * sum_gx[c]);
            else
              gx[i] += gam[c] * inv_std[c] * g[i];
          }
      },
      "batchnorm");
  return apply_activation(y, activation);
}

void BatchNormLayer::collect(const std::string& prefix, NamedTensors& params,
                             NamedTensors& buffers) {
  params.emplace_back(prefix + "gamma", &gamma);
  params.emplace_back(prefix + "beta", &beta);
  buffers.emplace_back(prefix + "running_mean", &running_mean);
  buffers.emplace_back(prefix + "running_var", &running_var);
}

// ---------------------------------------------------------------------------

Sequential& Sequential::add(Layer layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Var Sequential::forward(Tape& tape, Var x, Mode mode) {
  for (Layer& layer : layers_) {
    x = std::visit(
        [&](auto& l) -> Var {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, BatchNormLayer>)
            return l.forward(tape, x, mode);
          else
            return l.forward(tape, x);
        },
        layer);
  }
  return x;
}

void Sequential::collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string name = prefix + std::to_string(i) + "/";
    std::visit([&](auto& l) { l.collect(name, params, buffers); }, layers_[i]);
  }
}

std::size_t Sequential::out_width() const {
  if (layers_.empty()) throw ContractError("empty layer stack has no output width");
  return std::visit(
      [](const auto& l) -> std::size_t {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, BatchNormLayer>)
          return l.width();
        else
          return l.out_width();
      },
      layers_.back());
}

// ---------------------------------------------------------------------------

AdamState::AdamState(NamedTensors params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ContractError("adam: learning rate must be positive");
  for (const auto& [name, t] : params_) {
    first_.emplace_back(t->size(), 0.0);
    second_.emplace_back(t->size(), 0.0);
  }
}

void AdamState::step() {
  for (const auto& [name, t] : params_)
    if (!t->has_grad()) throw ContractError("adam: parameter '" + name + "' has no gradient");
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& param = *params_[p].second;
    auto g = param.grad();
    auto& m = first_[p];
    auto& v = second_[p];
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      param[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    param.clear_grad();
  }
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  nlohmann::json manifest;
  manifest["format"] = "setgan-checkpoint";
  manifest["version"] = 1;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t->shape();
    e["values"] = std::vector<double>(t->data().begin(), t->data().end());
    entries.push_back(std::move(e));
  }
  manifest["parameters"] = std::move(entries);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  // nlohmann emits the shortest decimal form that parses back to the same
  // double, so values round-trip bit-exactly.
  out << manifest.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "setgan-checkpoint")
    throw ContractError("not a checkpoint manifest: " + path.string());
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& e : manifest.at("parameters")) by_name[e.at("name").get<std::string>()] = &e;
  for (const auto& [name, t] : tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ContractError("checkpoint lacks tensor '" + name + "'");
    const auto& e = *it->second;
    if (e.at("shape").get<Shape>() != t->shape())
      throw DimensionError("checkpoint tensor '" + name + "' has shape " +
                           shape_string(e.at("shape").get<Shape>()) + ", expected " +
                           shape_string(t->shape()));
    auto values = e.at("values").get<std::vector<double>>();
    std::copy(values.begin(), values.end(), t->data().begin());
  }
}

}  // namespace setgan
