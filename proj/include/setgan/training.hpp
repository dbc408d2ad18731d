#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "setgan/autodiff.hpp"
#include "setgan/discriminator.hpp"
#include "setgan/layers.hpp"

namespace setgan {

// Invalid run configuration; `field` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class GeneratorLoss { kMinimax, kNonSaturating };

std::string generator_loss_name(GeneratorLoss mode);
GeneratorLoss parse_generator_loss(const std::string& name);

struct GeneratorConfig {
  std::size_t latent_dim = 2;
  std::size_t data_dim = 2;
  std::size_t hidden_layers = 4;
  std::size_t hidden_width = 128;
};

// Dense hidden layers with batch normalization and ReLU, then a linear output
// layer. The latent prior is a standard normal.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& config, Rng& rng);

  std::size_t latent_dim() const { return config_.latent_dim; }
  std::size_t data_dim() const { return config_.data_dim; }
  const GeneratorConfig& config() const { return config_; }

  Tensor sample_latent(std::size_t n, Rng& rng) const;
  Var forward(Tape& tape, Var latent, Mode mode);
  // Draws n samples in inference mode.
  Tensor generate(std::size_t n, Rng& rng);

  void collect(NamedTensors& params, NamedTensors& buffers);
  NamedTensors parameters();
  // Parameters plus batch-norm running statistics.
  NamedTensors state();

 private:
  GeneratorConfig config_;
  Sequential net_;
};

struct RunConfig {
  Architecture architecture = Architecture::kSetGan;
  std::size_t set_size = 5;
  double learning_rate = 5e-4;
  std::size_t gd_ratio = 2;
  std::size_t epochs = 400;
  // Sets per update for set architectures, samples per update otherwise.
  std::size_t batch = 64;
  std::uint64_t seed = 7;
  GeneratorLoss generator_loss = GeneratorLoss::kNonSaturating;

  std::size_t hist_bins = 16;
  double hist_steepness = 100.0;

  std::size_t eval_every = 5;
  std::size_t eval_samples = 4000;
  std::size_t patience = 20;
  std::size_t sbd_depth = 5;

  GeneratorConfig generator;
  std::size_t d_feature_layers = 3;
  std::size_t d_feature_width = 32;
  std::size_t d_maxout_pieces = 5;
  std::size_t d_pair_layers = 3;
  std::size_t d_pair_width = 32;
  std::size_t md_kernels = 50;
  std::size_t md_kernel_dim = 5;

  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  DiscriminatorConfig discriminator_config() const;
  // Set size seen by the discriminator: 1 for gan/md.
  std::size_t effective_set_size() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  std::optional<double> sbd;
  double wall_seconds = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;

  // CSV with header epoch,d_loss,g_loss,sbd,wall_s.
  std::string to_csv() const;
  // Same body without the wall-clock column.
  std::string deterministic_csv() const;
};

// Stacks m sets of k distinct rows of `dataset` into [(m * k) x d].
Tensor sample_real_sets(const Tensor& dataset, std::size_t k, std::size_t m, Rng& rng);
std::vector<SampleSet> split_sets(const Tensor& stacked, std::size_t k, Origin origin);

// m sets of k generated samples on `tape`; batch norm runs in train mode over
// the whole (m * k) batch.
Var sample_fake_sets(Generator& generator, Tape& tape, std::size_t k, std::size_t m, Rng& rng);

// log D and log(1 - D) from logits, with D clamped to [1e-7, 1 - 1e-7] in
// the value. The gradient is that of the unclamped log-sigmoid.
inline constexpr double kProbabilityClamp = 1e-7;
Var log_probability(Var logits);
Var log_complement_probability(Var logits);

// -[mean log D(real) + mean log(1 - D(fake))]
Var discriminator_loss(Var real_logits, Var fake_logits);
// minimax: mean log(1 - D(fake)); nonsaturating: -mean log D(fake).
Var generator_loss(Var fake_logits, GeneratorLoss mode);

// One discriminator update on m fresh real and m generated sets of k; the
// generator's parameters are left untouched. Returns the loss before the step.
double discriminator_step(Generator& generator, Discriminator& discriminator, AdamState& opt,
                          const Tensor& train_data, std::size_t k, std::size_t m, Rng& rng);
// One generator update; the discriminator's parameters are left untouched.
double generator_step(Generator& generator, Discriminator& discriminator, AdamState& opt,
                      GeneratorLoss mode, std::size_t k, std::size_t m, Rng& rng);

struct TrainResult {
  Generator generator;  // best checkpoint by monitored SBD
  TrainingLog log;
  std::size_t best_epoch = 0;
  double best_sbd = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Alternating updates: per outer step, one discriminator update followed by
// gd_ratio generator updates. One epoch is one pass of the discriminator over
// `train_data`. SBD against `holdout` is evaluated every eval_every epochs
// (and before training); the best generator is retained and training stops
// after `patience` evaluations without improvement. Throws NumericalError
// naming the step when a loss is non-finite.
TrainResult train(const RunConfig& config, const Tensor& train_data, const Tensor& holdout,
                  const EpochCallback& on_epoch = {});

// Builds a fresh generator exactly as train() would for `config`.
Generator make_generator(const RunConfig& config);

}  // namespace setgan
