#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "setgan/autodiff.hpp"
#include "setgan/layers.hpp"
#include "setgan/soft_histogram.hpp"

namespace setgan {

enum class Architecture { kGan, kMinibatch, kPacGan, kSetGan };

std::string architecture_name(Architecture arch);
Architecture parse_architecture(const std::string& name);
// gan and md classify single samples; pacgan and setgan classify sets.
bool is_set_architecture(Architecture arch);

enum class Origin { kReal, kGenerated };

// One set of k samples of width d, stacked k x d, all of one origin.
struct SampleSet {
  Tensor samples;
  Origin origin = Origin::kReal;

  std::size_t size() const { return samples.rows(); }
  std::size_t width() const { return samples.cols(); }
};

using PairIndex = std::pair<std::uint32_t, std::uint32_t>;

// All ordered pairs (i, j), i != j, lexicographic. Requires k >= 2.
std::vector<PairIndex> enumerate_pairs(std::size_t k);

enum class Aggregation { kSoftHistogram, kMean };

struct DiscriminatorConfig {
  Architecture architecture = Architecture::kSetGan;
  std::size_t data_dim = 2;
  std::size_t set_size = 5;
  // Feature subnetwork: maxout stack.
  std::size_t feature_layers = 3;
  std::size_t feature_width = 32;
  std::size_t maxout_pieces = 5;
  // Pairing subnetwork (setgan only): dense stack, last layer linear.
  std::size_t pair_layers = 3;
  std::size_t pair_width = 32;
  HistogramSpec histogram;
  Aggregation aggregation = Aggregation::kSoftHistogram;
  // Minibatch discrimination (md only).
  std::size_t md_kernels = 50;
  std::size_t md_kernel_dim = 5;
};

// Appends o(x_i)_b = sum_{j != i} exp(-||M_ib - M_jb||_1) to the features,
// with M_i = F_i T reshaped to kernels x kernel_dim.
struct MinibatchDiscriminationLayer {
  MinibatchDiscriminationLayer() = default;
  MinibatchDiscriminationLayer(std::size_t in, std::size_t kernels, std::size_t kernel_dim,
                               Rng& rng);

  std::size_t in_width() const { return projection.dim(0); }
  std::size_t kernels() const { return kernels_; }
  std::size_t out_width() const { return in_width() + kernels_; }

  Var forward(Tape& tape, Var features);
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers);

  Tensor projection;  // in x (kernels * kernel_dim)
  std::size_t kernels_ = 0;
  std::size_t kernel_dim_ = 0;
};

// Closeness statistic of minibatch discrimination on an already projected
// [batch x kernels*kernel_dim] matrix; returns [batch x kernels].
Var minibatch_closeness(Var projected, std::size_t kernels, std::size_t kernel_dim);

class Discriminator {
 public:
  virtual ~Discriminator() = default;

  // Logits for m sets stacked as [(m * k) x d]; k = set_size() (1 for the
  // single-sample architectures). Returns [m x 1].
  virtual Var logits(Tape& tape, Var samples) = 0;
  virtual void collect(NamedTensors& params, NamedTensors& buffers) = 0;
  virtual std::size_t set_size() const = 0;
  virtual Architecture architecture() const = 0;

  // Probabilities in (0, 1), [m x 1].
  Var forward(Tape& tape, Var samples) { return sigmoid(logits(tape, samples)); }
  // Probability for one set, on a private tape.
  double probability(const SampleSet& set);

  NamedTensors parameters();
};

// Per-sample discriminator: maxout feature stack + dense classifier.
class VanillaDiscriminator : public Discriminator {
 public:
  VanillaDiscriminator(const DiscriminatorConfig& config, Rng& rng);
  // Widened-input variant used by PacGAN.
  VanillaDiscriminator(const DiscriminatorConfig& config, std::size_t input_width, Rng& rng);

  Var logits(Tape& tape, Var samples) override;
  void collect(NamedTensors& params, NamedTensors& buffers) override;
  std::size_t set_size() const override { return 1; }
  Architecture architecture() const override { return Architecture::kGan; }

  Sequential features;
  DenseLayer classifier;
};

// Concatenates the k samples of a set in order and classifies the k*d vector.
class PacDiscriminator : public Discriminator {
 public:
  PacDiscriminator(const DiscriminatorConfig& config, Rng& rng);

  Var logits(Tape& tape, Var samples) override;
  void collect(NamedTensors& params, NamedTensors& buffers) override;
  std::size_t set_size() const override { return k_; }
  Architecture architecture() const override { return Architecture::kPacGan; }

  VanillaDiscriminator packed;

 private:
  std::size_t k_;
  std::size_t d_;
};

// Feature stack, then minibatch discrimination across the whole batch, then
// the classifier.
class MinibatchDiscriminator : public Discriminator {
 public:
  MinibatchDiscriminator(const DiscriminatorConfig& config, Rng& rng);

  Var logits(Tape& tape, Var samples) override;
  void collect(NamedTensors& params, NamedTensors& buffers) override;
  std::size_t set_size() const override { return 1; }
  Architecture architecture() const override { return Architecture::kMinibatch; }

  Sequential features;
  MinibatchDiscriminationLayer minibatch;
  DenseLayer classifier;
};

// Permutation-invariant set discriminator: per-sample features, a pairing
// network over every ordered pair of feature vectors, histogram (or mean)
// aggregation over the pairs, and a classifier on the aggregate.
class SetDiscriminator : public Discriminator {
 public:
  SetDiscriminator(const DiscriminatorConfig& config, Rng& rng);

  Var logits(Tape& tape, Var samples) override;
  void collect(NamedTensors& params, NamedTensors& buffers) override;
  std::size_t set_size() const override { return k_; }
  Architecture architecture() const override { return Architecture::kSetGan; }

  // Pair rows for m sets: row p of set s holds [F_{s,i} | F_{s,j}].
  Var pair_features(Var features, std::size_t sets) const;
  Var aggregate(Var pair_out, std::size_t sets) const;

  Sequential features;  // D_f
  Sequential pairing;   // D_g; empty means identity
  DenseLayer classifier;  // D_h
  HistogramSpec histogram;
  Aggregation aggregation;

 private:
  std::size_t k_;
  std::size_t d_;
  std::vector<PairIndex> pairs_;
};

std::unique_ptr<Discriminator> make_discriminator(const DiscriminatorConfig& config, Rng& rng);

// Maxout feature stack shared by every architecture.
Sequential make_feature_stack(std::size_t input_width, const DiscriminatorConfig& config,
                              Rng& rng);

}  // namespace setgan
