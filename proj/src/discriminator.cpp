#include "setgan/discriminator.hpp"

#include <cmath>

namespace setgan {

std::string architecture_name(Architecture arch) {
  switch (arch) {
    case Architecture::kGan:
      return "gan";
    case Architecture::kMinibatch:
      return "md";
    case Architecture::kPacGan:
      return "pacgan";
    case Architecture::kSetGan:
      return "setgan";
  }
  return "gan";
}

Architecture parse_architecture(const std::string& name) {
  for (Architecture a : {Architecture::kGan, Architecture::kMinibatch, Architecture::kPacGan,
                         Architecture::kSetGan})
    if (architecture_name(a) == name) return a;
  throw ContractError("unknown architecture '" + name + "' (expected gan, md, pacgan or setgan)");
}

bool is_set_architecture(Architecture arch) {
  return arch == Architecture::kPacGan || arch == Architecture::kSetGan;
}

std::vector<PairIndex> enumerate_pairs(std::size_t k) {
  if (k < 2) throw ContractError("pair enumeration needs a set of at least 2 samples");
  std::vector<PairIndex> pairs;
  pairs.reserve(k * (k - 1));
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t j = 0; j < k; ++j)
      if (i != j) pairs.emplace_back(i, j);
  return pairs;
}

Sequential make_feature_stack(std::size_t input_width, const DiscriminatorConfig& config,
                              Rng& rng) {
  Sequential stack;
  std::size_t width = input_width;
  for (std::size_t i = 0; i < config.feature_layers; ++i) {
    stack.add(MaxoutLayer(width, config.feature_width, config.maxout_pieces, rng));
    width = config.feature_width;
  }
  return stack;
}

namespace {

std::size_t stack_width(const Sequential& stack, std::size_t input_width) {
  return stack.empty() ? input_width : stack.out_width();
}

void check_samples(Var samples, std::size_t k, std::size_t d, const char* who) {
  const Tensor& x = samples.value();
  if (x.rank() != 2 || x.dim(1) != d)
    throw DimensionError(std::string(who) + ": expected samples of width " + std::to_string(d) +
                         ", got " + shape_string(x.shape()));
  if (x.dim(0) % k != 0)
    throw DimensionError(std::string(who) + ": " + std::to_string(x.dim(0)) +
                         " rows do not form sets of " + std::to_string(k));
}

}  // namespace

double Discriminator::probability(const SampleSet& set) {
  Tape tape;
  return forward(tape, tape.constant(set.samples)).item();
}

NamedTensors Discriminator::parameters() {
  NamedTensors params, buffers;
  collect(params, buffers);
  return params;
}

// ---------------------------------------------------------------------------

MinibatchDiscriminationLayer::MinibatchDiscriminationLayer(std::size_t in, std::size_t kernels,
                                                           std::size_t kernel_dim, Rng& rng)
    : projection(Shape{in, kernels * kernel_dim}), kernels_(kernels), kernel_dim_(kernel_dim) {
  init_glorot_uniform(projection, in, kernels * kernel_dim, rng);
  projection.set_requires_grad(true);
}

Var MinibatchDiscriminationLayer::forward(Tape& tape, Var features) {
  const Tensor& f = features.value();
  if (f.rank() != 2 || f.dim(1) != in_width())
    throw DimensionError("minibatch discrimination: expected width " +
                         std::to_string(in_width()) + ", got " + shape_string(f.shape()));
  Var projected = matmul(features, tape.parameter(projection));
  return concat_cols(features, minibatch_closeness(projected, kernels_, kernel_dim_));
}

void MinibatchDiscriminationLayer::collect(const std::string& prefix, NamedTensors& params,
                                           NamedTensors&) {
  params.emplace_back(prefix + "projection", &projection);
}

Var minibatch_closeness(Var projected, std::size_t kernels, std::size_t kernel_dim) {
  const Tensor& m = projected.value();
  if (m.rank() != 2 || m.dim(1) != kernels * kernel_dim)
    throw DimensionError("minibatch closeness: expected width " +
                         std::to_string(kernels * kernel_dim));
  const std::size_t batch = m.dim(0);
  if (batch < 2) throw ContractError("minibatch discrimination needs a batch of at least 2");
  const std::size_t w = kernels * kernel_dim;

  // closeness[i][j][b] = exp(-||M_ib - M_jb||_1), symmetric in i, j.
  std::vector<double> close(batch * batch * kernels, 0.0);
  Tensor out(Shape{batch, kernels});
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = i + 1; j < batch; ++j)
      for (std::size_t b = 0; b < kernels; ++b) {
        double dist = 0.0;
        for (std::size_t c = 0; c < kernel_dim; ++c)
          dist += std::abs(m[i * w + b * kernel_dim + c] - m[j * w + b * kernel_dim + c]);
        const double e = std::exp(-dist);
        close[(i * batch + j) * kernels + b] = e;
        close[(j * batch + i) * kernels + b] = e;
      }
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < batch; ++j)
      if (j != i)
        for (std::size_t b = 0; b < kernels; ++b)
          out[i * kernels + b] += close[(i * batch + j) * kernels + b];

  Tape& tape = projected.tape();
  return tape.record(
      std::move(out), {projected},
      [close = std::move(close), batch, kernels, kernel_dim, w](const BackwardContext& ctx) {
        const Tensor& x = ctx.input(0);
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < batch; ++j) {
            if (j == i) continue;
            for (std::size_t b = 0; b < kernels; ++b) {
              const double e = close[(i * batch + j) * kernels + b];
              // o_ib and o_jb both contain e_ijb.
              const double up = -e * (g[i * kernels + b] + g[j * kernels + b]);
              for (std::size_t c = 0; c < kernel_dim; ++c) {
                const double diff = x[i * w + b * kernel_dim + c] - x[j * w + b * kernel_dim + c];
                const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                gx[i * w + b * kernel_dim + c] += up * sign;
              }
            }
          }
      },
      "minibatch_closeness");
}

// ---------------------------------------------------------------------------

VanillaDiscriminator::VanillaDiscriminator(const DiscriminatorConfig& config, Rng& rng)
    : VanillaDiscriminator(config, config.data_dim, rng) {}

VanillaDiscriminator::VanillaDiscriminator(const DiscriminatorConfig& config,
                                           std::size_t input_width, Rng& rng)
    : features(make_feature_stack(input_width, config, rng)),
      classifier(stack_width(features, input_width), 1, Activation::kIdentity, rng) {}

Var VanillaDiscriminator::logits(Tape& tape, Var samples) {
  return classifier.forward(tape, features.forward(tape, samples, Mode::kTrain));
}

void VanillaDiscriminator::collect(NamedTensors& params, NamedTensors& buffers) {
  features.collect("d_f/", params, buffers);
  classifier.collect("d_h/", params, buffers);
}

PacDiscriminator::PacDiscriminator(const DiscriminatorConfig& config, Rng& rng)
    : packed(config, config.data_dim * config.set_size, rng),
      k_(config.set_size),
      d_(config.data_dim) {
  if (k_ < 1) throw ContractError("pacgan needs a pack size of at least 1");
}

Var PacDiscriminator::logits(Tape& tape, Var samples) {
  check_samples(samples, k_, d_, "pacgan");
  const std::size_t sets = samples.value().dim(0) / k_;
  // Row-major storage makes the reshape an in-order concatenation.
  Var stacked = k_ == 1 ? samples : reshape(samples, Shape{sets, k_ * d_});
  return packed.logits(tape, stacked);
}

void PacDiscriminator::collect(NamedTensors& params, NamedTensors& buffers) {
  packed.collect(params, buffers);
}

MinibatchDiscriminator::MinibatchDiscriminator(const DiscriminatorConfig& config, Rng& rng)
    : features(make_feature_stack(config.data_dim, config, rng)),
      minibatch(stack_width(features, config.data_dim), config.md_kernels, config.md_kernel_dim,
                rng),
      classifier(minibatch.out_width(), 1, Activation::kIdentity, rng) {}

Var MinibatchDiscriminator::logits(Tape& tape, Var samples) {
  Var f = features.forward(tape, samples, Mode::kTrain);
  return classifier.forward(tape, minibatch.forward(tape, f));
}

void MinibatchDiscriminator::collect(NamedTensors& params, NamedTensors& buffers) {
  features.collect("d_f/", params, buffers);
  minibatch.collect("md/", params, buffers);
  classifier.collect("d_h/", params, buffers);
}

SetDiscriminator::SetDiscriminator(const DiscriminatorConfig& config, Rng& rng)
    : features(make_feature_stack(config.data_dim, config, rng)),
      histogram(config.histogram),
      aggregation(config.aggregation),
      k_(config.set_size),
      d_(config.data_dim),
      pairs_(enumerate_pairs(config.set_size)) {
  std::size_t width = 2 * stack_width(features, config.data_dim);
  for (std::size_t i = 0; i < config.pair_layers; ++i) {
    const bool last = i + 1 == config.pair_layers;
    pairing.add(DenseLayer(width, config.pair_width,
                           last ? Activation::kIdentity : Activation::kLeakyRelu, rng));
    width = config.pair_width;
  }
  const std::size_t agg_width =
      aggregation == Aggregation::kSoftHistogram ? width * histogram.bins() : width;
  classifier = DenseLayer(agg_width, 1, Activation::kIdentity, rng);
}

Var SetDiscriminator::pair_features(Var features_out, std::size_t sets) const {
  std::vector<std::uint32_t> left, right;
  left.reserve(sets * pairs_.size());
  right.reserve(sets * pairs_.size());
  for (std::size_t s = 0; s < sets; ++s)
    for (const auto& [i, j] : pairs_) {
      left.push_back(static_cast<std::uint32_t>(s * k_ + i));
      right.push_back(static_cast<std::uint32_t>(s * k_ + j));
    }
  return concat_cols(gather_rows(features_out, left), gather_rows(features_out, right));
}

Var SetDiscriminator::aggregate(Var pair_out, std::size_t sets) const {
  const std::size_t p = pairs_.size();
  if (aggregation == Aggregation::kSoftHistogram)
    return soft_histogram_grouped(pair_out, p, histogram);
  const std::size_t width = pair_out.value().dim(1);
  return mean(reshape(pair_out, Shape{sets, p, width}), 1);
}

Var SetDiscriminator::logits(Tape& tape, Var samples) {
  check_samples(samples, k_, d_, "setgan");
  const std::size_t sets = samples.value().dim(0) / k_;
  Var f = features.forward(tape, samples, Mode::kTrain);
  Var pairs = pair_features(f, sets);
  Var g = pairing.forward(tape, pairs, Mode::kTrain);
  return classifier.forward(tape, aggregate(g, sets));
}

void SetDiscriminator::collect(NamedTensors& params, NamedTensors& buffers) {
  features.collect("d_f/", params, buffers);
  pairing.collect("d_g/", params, buffers);
  classifier.collect("d_h/", params, buffers);
}

std::unique_ptr<Discriminator> make_discriminator(const DiscriminatorConfig& config, Rng& rng) {
  switch (config.architecture) {
    case Architecture::kGan:
      return std::make_unique<VanillaDiscriminator>(config, rng);
    case Architecture::kMinibatch:
      return std::make_unique<MinibatchDiscriminator>(config, rng);
    case Architecture::kPacGan:
      return std::make_unique<PacDiscriminator>(config, rng);
    case Architecture::kSetGan:
      return std::make_unique<SetDiscriminator>(config, rng);
  }
  throw ContractError("unknown architecture");
}

}  // namespace setgan
