#include "setgan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "setgan/metrics.hpp"

namespace setgan {

namespace {

// splitmix64 finalizer; decorrelates the per-purpose random streams of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kInitStream = 0, kTrainStream = 1, kEvalStream = 2 };

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// log(sigmoid(x)) = -softplus(-x), computed without overflow.
double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

Var clamped_log_sigmoid(Var logits, double sign, const char* name) {
  const Tensor& l = logits.value();
  const double lo = std::log(kProbabilityClamp);
  const double hi = std::log1p(-kProbabilityClamp);
  Tensor out(l.shape());
  for (std::size_t i = 0; i < l.size(); ++i)
    out[i] = std::clamp(log_sigmoid(sign * l[i]), lo, hi);
  return logits.tape().record(
      std::move(out), {logits},
      [sign](const BackwardContext& ctx) {
        const Tensor& x = ctx.input(0);
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        // d/dx log sigmoid(s x) = s * sigmoid(-s x)
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sign * logistic(-sign * x[i]);
      },
      name);
}

}  // namespace

std::string generator_loss_name(GeneratorLoss mode) {
  return mode == GeneratorLoss::kMinimax ? "minimax" : "nonsaturating";
}

GeneratorLoss parse_generator_loss(const std::string& name) {
  if (name == "minimax") return GeneratorLoss::kMinimax;
  if (name == "nonsaturating") return GeneratorLoss::kNonSaturating;
  throw ConfigError("gen.loss", "expected minimax or nonsaturating, got '" + name + "'");
}

// ---------------------------------------------------------------------------

Generator::Generator(const GeneratorConfig& config, Rng& rng) : config_(config) {
  std::size_t width = config.latent_dim;
  for (std::size_t i = 0; i < config.hidden_layers; ++i) {
    net_.add(DenseLayer(width, config.hidden_width, Activation::kIdentity, rng));
    net_.add(BatchNormLayer(config.hidden_width, Activation::kRelu));
    width = config.hidden_width;
  }
  net_.add(DenseLayer(width, config.data_dim, Activation::kIdentity, rng));
}

Tensor Generator::sample_latent(std::size_t n, Rng& rng) const {
  Tensor z(Shape{n, config_.latent_dim});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : z.data()) v = normal(rng);
  return z;
}

Var Generator::forward(Tape& tape, Var latent, Mode mode) {
  return net_.forward(tape, latent, mode);
}

Tensor Generator::generate(std::size_t n, Rng& rng) {
  Tape tape;
  Tensor out = forward(tape, tape.constant(sample_latent(n, rng)), Mode::kInfer).value();
  return out;
}

void Generator::collect(NamedTensors& params, NamedTensors& buffers) {
  net_.collect("g/", params, buffers);
}

NamedTensors Generator::parameters() {
  NamedTensors params, buffers;
  collect(params, buffers);
  return params;
}

NamedTensors Generator::state() {
  NamedTensors params, buffers;
  collect(params, buffers);
  params.insert(params.end(), buffers.begin(), buffers.end());
  return params;
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("lr", "learning rate must be positive");
  if (gd_ratio < 1) throw ConfigError("gd_ratio", "must be at least 1");
  if (is_set_architecture(architecture)) {
    if (set_size < 2)
      throw ConfigError("k", architecture_name(architecture) + " requires k >= 2");
  } else if (set_size != 1) {
    throw ConfigError("k", architecture_name(architecture) + " requires k = 1");
  }
  if (batch < 1) throw ConfigError("batch", "must be at least 1");
  if (architecture == Architecture::kMinibatch && batch < 2)
    throw ConfigError("batch", "minibatch discrimination needs at least 2 samples per batch");
  if (hist_bins < 1) throw ConfigError("hist.bins", "must be at least 1");
  if (!(hist_steepness > 0.0)) throw ConfigError("hist.steepness", "must be positive");
  if (eval_every < 1) throw ConfigError("early_stop.every", "must be at least 1");
  if (patience < 1) throw ConfigError("early_stop.patience", "must be at least 1");
  if (eval_samples < (std::size_t{1} << sbd_depth))
    throw ConfigError("early_stop.samples", "must be at least 2^sbd.depth");
  if (generator.latent_dim < 1) throw ConfigError("latent_dim", "must be at least 1");
  if (generator.data_dim < 1) throw ConfigError("data_dim", "must be at least 1");
  if (generator.hidden_width < 1) throw ConfigError("net.g_width", "must be at least 1");
  if (d_feature_width < 1) throw ConfigError("net.d_width", "must be at least 1");
  if (d_maxout_pieces < 1) throw ConfigError("net.d_pieces", "must be at least 1");
  if (d_pair_width < 1) throw ConfigError("net.pair_width", "must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam.beta1", "must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam.beta2", "must be in [0, 1)");
  if (architecture == Architecture::kMinibatch && (md_kernels < 1 || md_kernel_dim < 1))
    throw ConfigError("md.kernels", "must be at least 1");
}

std::size_t RunConfig::effective_set_size() const {
  return is_set_architecture(architecture) ? set_size : 1;
}

DiscriminatorConfig RunConfig::discriminator_config() const {
  DiscriminatorConfig d;
  d.architecture = architecture;
  d.data_dim = generator.data_dim;
  d.set_size = effective_set_size();
  d.feature_layers = d_feature_layers;
  d.feature_width = d_feature_width;
  d.maxout_pieces = d_maxout_pieces;
  d.pair_layers = d_pair_layers;
  d.pair_width = d_pair_width;
  d.histogram = HistogramSpec::uniform(hist_bins, hist_steepness);
  d.md_kernels = md_kernels;
  d.md_kernel_dim = md_kernel_dim;
  return d;
}

// ---------------------------------------------------------------------------

namespace {

std::string log_csv(const TrainingLog& log, bool with_wall) {
  std::ostringstream os;
  os << "epoch,d_loss,g_loss,sbd" << (with_wall ? ",wall_s" : "") << '\n';
  for (const EpochRecord& r : log.epochs) {
    os << r.epoch << ',' << format_double(r.d_loss) << ',' << format_double(r.g_loss) << ','
       << (r.sbd ? format_double(*r.sbd) : "");
    if (with_wall) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.wall_seconds);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string TrainingLog::to_csv() const { return log_csv(*this, true); }

std::string TrainingLog::deterministic_csv() const { return log_csv(*this, false); }

// ---------------------------------------------------------------------------

Tensor sample_real_sets(const Tensor& dataset, std::size_t k, std::size_t m, Rng& rng) {
  if (dataset.rank() != 2) throw DimensionError("dataset must be [N x d]");
  const std::size_t n = dataset.rows(), d = dataset.cols();
  if (k < 1 || m < 1) throw ContractError("set size and set count must be positive");
  if (k > n)
    throw ContractError("cannot draw sets of " + std::to_string(k) + " distinct samples from " +
                        std::to_string(n));
  Tensor out(Shape{m * k, d});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  for (std::size_t s = 0; s < m; ++s) {
    chosen.clear();
    if (2 * k > n) {
      // Dense case: partial Fisher-Yates over all indices.
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> tail(i, n - 1);
        std::swap(all[i], all[tail(rng)]);
        chosen.push_back(all[i]);
      }
    } else {
      while (chosen.size() < k) {
        const std::size_t idx = pick(rng);
        if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end()) chosen.push_back(idx);
      }
    }
    for (std::size_t i = 0; i < k; ++i)
      std::copy_n(&dataset.data()[chosen[i] * d], d, &out[(s * k + i) * d]);
  }
  return out;
}

std::vector<SampleSet> split_sets(const Tensor& stacked, std::size_t k, Origin origin) {
  if (k == 0 || stacked.rows() % k != 0) throw DimensionError("rows do not split into sets");
  const std::size_t d = stacked.cols();
  std::vector<SampleSet> sets;
  for (std::size_t s = 0; s < stacked.rows() / k; ++s) {
    Tensor t(Shape{k, d});
    std::copy_n(&stacked.data()[s * k * d], k * d, t.data().begin());
    sets.push_back(SampleSet{std::move(t), origin});
  }
  return sets;
}

Var sample_fake_sets(Generator& generator, Tape& tape, std::size_t k, std::size_t m, Rng& rng) {
  Var z = tape.constant(generator.sample_latent(m * k, rng));
  return generator.forward(tape, z, Mode::kTrain);
}

Var log_probability(Var logits) { return clamped_log_sigmoid(logits, 1.0, "log_probability"); }

Var log_complement_probability(Var logits) {
  return clamped_log_sigmoid(logits, -1.0, "log_complement_probability");
}

Var discriminator_loss(Var real_logits, Var fake_logits) {
  if (real_logits.value().size() != fake_logits.value().size())
    throw ContractError("discriminator loss needs equal numbers of real and generated sets");
  Var real_term = mean(log_probability(real_logits));
  Var fake_term = mean(log_complement_probability(fake_logits));
  return scale(add(real_term, fake_term), -1.0);
}

Var generator_loss(Var fake_logits, GeneratorLoss mode) {
  if (mode == GeneratorLoss::kMinimax) return mean(log_complement_probability(fake_logits));
  return scale(mean(log_probability(fake_logits)), -1.0);
}

// ---------------------------------------------------------------------------

double discriminator_step(Generator& generator, Discriminator& discriminator, AdamState& opt,
                          const Tensor& train_data, std::size_t k, std::size_t m, Rng& rng) {
  const NamedTensors g_params = generator.parameters();
  set_requires_grad(g_params, false);
  double value = 0.0;
  try {
    Tape tape;
    Var real = tape.constant(sample_real_sets(train_data, k, m, rng));
    Var fake = sample_fake_sets(generator, tape, k, m, rng);
    Var loss =
        discriminator_loss(discriminator.logits(tape, real), discriminator.logits(tape, fake));
    value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("non-finite discriminator loss");
    tape.backward(loss);
    opt.step();
  } catch (...) {
    set_requires_grad(g_params, true);
    throw;
  }
  set_requires_grad(g_params, true);
  return value;
}

double generator_step(Generator& generator, Discriminator& discriminator, AdamState& opt,
                      GeneratorLoss mode, std::size_t k, std::size_t m, Rng& rng) {
  const NamedTensors d_params = discriminator.parameters();
  set_requires_grad(d_params, false);
  double value = 0.0;
  try {
    Tape tape;
    Var fake = sample_fake_sets(generator, tape, k, m, rng);
    Var loss = generator_loss(discriminator.logits(tape, fake), mode);
    value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("non-finite generator loss");
    tape.backward(loss);
    opt.step();
  } catch (...) {
    set_requires_grad(d_params, true);
    throw;
  }
  set_requires_grad(d_params, true);
  return value;
}

Generator make_generator(const RunConfig& config) {
  Rng init(derive_seed(config.seed, kInitStream));
  return Generator(config.generator, init);
}

TrainResult train(const RunConfig& config, const Tensor& train_data, const Tensor& holdout,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_data.rank() != 2 || train_data.cols() != config.generator.data_dim)
    throw DimensionError("training data width does not match the configured data dimension");
  if (holdout.rank() != 2 || holdout.cols() != config.generator.data_dim)
    throw DimensionError("held-out data width does not match the configured data dimension");

  Rng init(derive_seed(config.seed, kInitStream));
  Generator generator(config.generator, init);
  std::unique_ptr<Discriminator> discriminator =
      make_discriminator(config.discriminator_config(), init);
  Rng rng(derive_seed(config.seed, kTrainStream));
  Rng eval_rng(derive_seed(config.seed, kEvalStream));

  const std::size_t k = config.effective_set_size();
  const std::size_t m = config.batch;
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, train_data.rows() / (m * k));

  const NamedTensors g_params = generator.parameters();
  const NamedTensors d_params = discriminator->parameters();
  AdamConfig adam{config.learning_rate, config.adam_beta1, config.adam_beta2, 1e-8};
  AdamState g_opt(g_params, adam);
  AdamState d_opt(d_params, adam);

  const PartitionTree tree = build_partition_tree(holdout, config.sbd_depth);
  const BinHistogram reference = assign_histogram(tree, holdout);
  const Tensor eval_latent = generator.sample_latent(config.eval_samples, eval_rng);
  auto monitor = [&](Generator& g) {
    Tape tape;
    const Tensor samples = g.forward(tape, tape.constant(eval_latent), Mode::kInfer).value();
    return sbd(reference, assign_histogram(tree, samples));
  };

  TrainResult result;
  result.generator = generator;
  result.best_sbd = monitor(generator);
  result.best_epoch = 0;
  std::size_t stale = 0;

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double d_total = 0.0, g_total = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const char* phase = "discriminator";
      try {
        d_total += discriminator_step(generator, *discriminator, d_opt, train_data, k, m, rng);
        phase = "generator";
        for (std::size_t r = 0; r < config.gd_ratio; ++r)
          g_total += generator_step(generator, *discriminator, g_opt, config.generator_loss, k, m,
                                    rng) /
                     static_cast<double>(config.gd_ratio);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ", " + phase + " update: " + e.what());
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.d_loss = d_total / static_cast<double>(steps_per_epoch);
    record.g_loss = g_total / static_cast<double>(steps_per_epoch);
    bool stop = false;
    if (epoch % config.eval_every == 0) {
      const double score = monitor(generator);
      record.sbd = score;
      if (score < result.best_sbd) {
        result.best_sbd = score;
        result.best_epoch = epoch;
        result.generator = generator;
        stale = 0;
      } else if (++stale >= config.patience) {
        stop = true;
      }
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(record);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(record);
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  // The copy taken at the best epoch carries the gradient flags of that time.
  set_requires_grad(result.generator.parameters(), true);
  return result;
}

}  // namespace setgan
