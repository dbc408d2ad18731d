#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "setgan/autodiff.hpp"

namespace setgan {

using Rng = std::mt19937_64;

enum class Activation { kIdentity, kRelu, kLeakyRelu, kSigmoid, kTanh };

inline constexpr double kLeakySlope = 0.2;

Var apply_activation(Var x, Activation act);
std::string activation_name(Activation act);
Activation parse_activation(const std::string& name);

enum class Mode { kTrain, kInfer };

// Named tensors of a network, in a stable order. Used for optimizer state and
// checkpoints.
using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;

// Glorot-uniform weights, a = sqrt(6 / (fan_in + fan_out)).
void init_glorot_uniform(Tensor& weights, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct DenseLayer {
  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng);

  std::size_t in_width() const { return weights.dim(0); }
  std::size_t out_width() const { return weights.dim(1); }

  // activation(x W + b)
  Var forward(Tape& tape, Var x);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);

  Tensor weights;  // in x out
  Tensor bias;     // out
  Activation activation = Activation::kIdentity;
};

struct MaxoutLayer {
  MaxoutLayer() = default;
  MaxoutLayer(std::size_t in, std::size_t out, std::size_t pieces, Rng& rng);

  std::size_t in_width() const { return weights.dim(0); }
  std::size_t out_width() const { return weights.dim(1); }
  std::size_t pieces() const { return weights.dim(2); }

  // out_j = max_p (x W[:, j, p] + b[j, p])
  Var forward(Tape& tape, Var x);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);

  Tensor weights;  // in x out x pieces
  Tensor bias;     // out x pieces
};

struct BatchNormLayer {
  static constexpr double kMomentum = 0.9;
  static constexpr double kEpsilon = 1e-5;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t features, Activation act = Activation::kIdentity);

  std::size_t width() const { return gamma.size(); }

  // Train mode normalizes with batch statistics and folds them into the
  // running estimates; infer mode uses the running estimates only.
  Var forward(Tape& tape, Var x, Mode mode);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);

  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  Activation activation = Activation::kIdentity;
};

using Layer = std::variant<DenseLayer, MaxoutLayer, BatchNormLayer>;

class Sequential {
 public:
  Sequential() = default;

  Sequential& add(Layer layer);
  Var forward(Tape& tape, Var x, Mode mode);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);

  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  std::size_t out_width() const;
  Layer& operator[](std::size_t i) { return layers_.at(i); }

 private:
  std::vector<Layer> layers_;
};

void set_requires_grad(const NamedTensors& params, bool on);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list.
class AdamState {
 public:
  AdamState(NamedTensors params, AdamConfig config);

  // Applies one update from the populated gradients, then clears them.
  // Throws ContractError when a parameter has no gradient.
  void step();

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  NamedTensors params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t step_ = 0;
};

// JSON manifest of named tensors with shapes and flat values.
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
// Loads values into the given tensors; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);

}  // namespace setgan
