#include "doctest.h"
#include "gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "setgan/metrics.hpp"
#include "setgan/training.hpp"

using namespace setgan;
using namespace setgan::testing;

namespace {

RunConfig tiny_run(Architecture arch) {
  RunConfig c;
  c.architecture = arch;
  c.set_size = is_set_architecture(arch) ? 3 : 1;
  c.batch = 8;
  c.epochs = 3;
  c.eval_every = 1;
  c.eval_samples = 256;
  c.sbd_depth = 3;
  c.generator.hidden_layers = 2;
  c.generator.hidden_width = 8;
  c.d_feature_layers = 2;
  c.d_feature_width = 6;
  c.d_maxout_pieces = 2;
  c.d_pair_layers = 2;
  c.d_pair_width = 5;
  c.hist_bins = 4;
  c.md_kernels = 3;
  c.md_kernel_dim = 2;
  return c;
}

Tensor grid_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_mixture(grid_mixture(5, 2.0, 0.05), n, rng);
}

std::vector<std::vector<double>> snapshot(const NamedTensors& tensors) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : tensors) out.emplace_back(t->data().begin(), t->data().end());
  return out;
}

double sigmoid_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("run config validation") {
  auto field_of = [](const RunConfig& c) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string();
  };
  RunConfig c;
  CHECK(field_of(c).empty());
  c.architecture = Architecture::kGan;
  c.set_size = 5;
  CHECK(field_of(c) == "k");
  c.set_size = 1;
  CHECK(field_of(c).empty());
  c.architecture = Architecture::kPacGan;
  CHECK(field_of(c) == "k");
  c.set_size = 2;
  CHECK(field_of(c).empty());
  c.learning_rate = 0.0;
  CHECK(field_of(c) == "lr");
  c.learning_rate = -1e-3;
  CHECK(field_of(c) == "lr");
  c.learning_rate = 1e-3;
  c.gd_ratio = 0;
  CHECK(field_of(c) == "gd_ratio");
  c.gd_ratio = 3;
  c.eval_samples = 16;
  CHECK(field_of(c) == "early_stop.samples");
}

TEST_CASE("real set sampling") {
  Rng rng(21);
  Tensor data(Shape{250, 1});
  std::iota(data.data().begin(), data.data().end(), 0.0);

  Tensor rows = sample_real_sets(data, 1, 10, rng);
  CHECK(rows.shape() == Shape{10, 1});

  const std::size_t m = 100000, k = 5;
  Tensor sets = sample_real_sets(data, k, m, rng);
  REQUIRE(sets.rows() == m * k);
  std::vector<double> strata(25, 0.0);
  bool distinct = true;
  for (std::size_t s = 0; s < m; ++s) {
    std::set<double> seen;
    for (std::size_t i = 0; i < k; ++i) {
      const double v = sets[s * k + i];
      distinct = distinct && seen.insert(v).second;
      strata[static_cast<std::size_t>(v) / 10] += 1.0;
    }
  }
  CHECK(distinct);
  const double total = static_cast<double>(m * k);
  const double p = 1.0 / 25.0;
  const double sigma = std::sqrt(p * (1.0 - p) / total);
  for (double c : strata) CHECK(std::abs(c / total - p) <= 3.0 * sigma);

  Tensor small(Shape{4, 2}, 1.0);
  CHECK_THROWS_AS(sample_real_sets(small, 5, 1, rng), ContractError);
  Tensor exact = sample_real_sets(data, 250, 1, rng);
  std::set<double> all(exact.data().begin(), exact.data().end());
  CHECK(all.size() == 250);

  auto split = split_sets(sets, k, Origin::kReal);
  CHECK(split.size() == m);
  CHECK(split[7].size() == k);
  CHECK(split[7].samples[2] == sets[7 * k + 2]);
}

TEST_CASE("generated sets") {
  RunConfig c = tiny_run(Architecture::kSetGan);
  Generator g = make_generator(c);
  Rng a(22), b(22);
  Tape tape;
  auto x = sample_fake_sets(g, tape, 3, 7, a).value();
  auto y = sample_fake_sets(g, tape, 3, 7, b).value();
  CHECK(x.shape() == Shape{21, 2});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);

  Rng rng(23);
  Tensor z = g.sample_latent(100000, rng);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) m += z[i * 2 + j];
    CHECK(std::abs(m / 1e5) < 0.02);
  }
}

TEST_CASE("discriminator loss at the uninformative point") {
  Tape tape;
  Var half = tape.constant(Tensor(Shape{6, 1}, 0.0));
  const double two_log_two = 2.0 * std::log(2.0);
  CHECK(std::abs(discriminator_loss(half, half).item() - two_log_two) <= 1e-12);

  Rng rng(24);
  Tensor r = random_tensor({6, 1}, rng, -3.0, 3.0);
  Tensor f = random_tensor({6, 1}, rng, -3.0, 3.0);
  // Swapping the labels only matters away from D = 1/2.
  CHECK(discriminator_loss(half, half).item() == discriminator_loss(half, half).item());
  CHECK(discriminator_loss(tape.constant(r), tape.constant(f)).item() !=
        discriminator_loss(tape.constant(f), tape.constant(r)).item());

  CHECK(generator_loss(half, GeneratorLoss::kMinimax).item() ==
        doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(generator_loss(half, GeneratorLoss::kNonSaturating).item() ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-14));

  CHECK_THROWS_AS(discriminator_loss(half, tape.constant(Tensor(Shape{5, 1}))), ContractError);
}

TEST_CASE("near-perfect discriminator") {
  const double delta = 1e-7;
  const double logit = std::log((1.0 - delta) / delta);
  Tape tape;
  Var real = tape.constant(Tensor(Shape{4, 1}, logit));
  Var fake = tape.constant(Tensor(Shape{4, 1}, -logit));
  CHECK(discriminator_loss(real, fake).item() == doctest::Approx(2e-7).epsilon(1e-6));

  // Beyond the clamp the loss stays finite.
  Var wrong = tape.constant(Tensor(Shape{4, 1}, 60.0));
  const double clamped = discriminator_loss(fake, wrong).item();
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-2.0 * std::log(kProbabilityClamp)).epsilon(1e-9));
}

TEST_CASE("single-sample loss is the classic two-term loss") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r = random_tensor({16, 1}, rng, -6.0, 6.0);
    Tensor f = random_tensor({16, 1}, rng, -6.0, 6.0);
    Tape tape;
    Var lr = log_probability(tape.constant(r));
    Var lf = log_complement_probability(tape.constant(f));
    double real_term = 0.0, fake_term = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      const double a = std::log(sigmoid_of(r[i]));
      const double b = std::log(1.0 - sigmoid_of(f[i]));
      CHECK(std::abs(lr.value()[i] - a) <= 1e-12);
      CHECK(std::abs(lf.value()[i] - b) <= 1e-12);
      real_term += a;
      fake_term += b;
    }
    const double classic = -(real_term / 16.0 + fake_term / 16.0);
    CHECK(std::abs(discriminator_loss(tape.constant(r), tape.constant(f)).item() - classic) <=
          1e-12);
  }
}

TEST_CASE("nonsaturating loss falls as D(fake) rises") {
  double previous = 1e300;
  for (double p : {0.5, 0.6, 0.8, 0.95, 0.999}) {
    Tape tape;
    Var logits = tape.constant(Tensor(Shape{3, 1}, std::log(p / (1.0 - p))));
    const double v = generator_loss(logits, GeneratorLoss::kNonSaturating).item();
    CHECK(v < previous);
    previous = v;
  }
}

TEST_CASE("loss gradients through the clamp-free region") {
  Rng rng(26);
  for (int i = 0; i < 20; ++i) {
    auto r = gradcheck([](Tape&, const std::vector<Var>& v) {
      return discriminator_loss(v[0], v[1]);
    }, {random_tensor({5, 1}, rng, -4.0, 4.0), random_tensor({5, 1}, rng, -4.0, 4.0)});
    CHECK(r.rel_error < 1e-4);
    for (GeneratorLoss mode : {GeneratorLoss::kMinimax, GeneratorLoss::kNonSaturating}) {
      auto g = gradcheck([mode](Tape&, const std::vector<Var>& v) {
        return generator_loss(v[0], mode);
      }, {random_tensor({5, 1}, rng, -4.0, 4.0)});
      CHECK(g.rel_error < 1e-4);
    }
  }
}

TEST_CASE("generator receives a gradient through the discriminator") {
  RunConfig c = tiny_run(Architecture::kSetGan);
  Generator g = make_generator(c);
  Rng rng(27);
  auto d = make_discriminator(c.discriminator_config(), rng);
  Tensor z = g.sample_latent(12, rng);
  NamedTensors params = g.parameters();
  Tensor& w = *params.front().second;
  auto loss = [&] {
    Tape tape;
    Var fake = g.forward(tape, tape.constant(z), Mode::kTrain);
    return generator_loss(d->logits(tape, fake), GeneratorLoss::kNonSaturating).item();
  };
  set_requires_grad(params, true);
  set_requires_grad(d->parameters(), false);
  {
    Tape tape;
    Var fake = g.forward(tape, tape.constant(z), Mode::kTrain);
    tape.backward(generator_loss(d->logits(tape, fake), GeneratorLoss::kNonSaturating));
  }
  const double analytic = w.grad()[0];
  set_requires_grad(params, false);
  const double h = 1e-5, w0 = w[0];
  w[0] = w0 + h;
  const double up = loss();
  w[0] = w0 - h;
  const double down = loss();
  w[0] = w0;
  const double numeric = (up - down) / (2.0 * h);
  CHECK(numeric != 0.0);
  CHECK(analytic == doctest::Approx(numeric).epsilon(1e-4));
}

TEST_CASE("each update touches one network") {
  for (Architecture arch : {Architecture::kGan, Architecture::kSetGan}) {
    RunConfig c = tiny_run(arch);
    Generator g = make_generator(c);
    Rng rng(28);
    auto d = make_discriminator(c.discriminator_config(), rng);
    AdamConfig adam{1e-2, 0.5, 0.999, 1e-8};
    AdamState g_opt(g.parameters(), adam);
    AdamState d_opt(d->parameters(), adam);
    Tensor data = grid_data(200, 29);
    const std::size_t k = c.effective_set_size();

    auto g_before = snapshot(g.parameters());
    auto d_before = snapshot(d->parameters());
    discriminator_step(g, *d, d_opt, data, k, c.batch, rng);
    CHECK(snapshot(g.parameters()) == g_before);
    CHECK(snapshot(d->parameters()) != d_before);

    d_before = snapshot(d->parameters());
    generator_step(g, *d, g_opt, GeneratorLoss::kNonSaturating, k, c.batch, rng);
    CHECK(snapshot(d->parameters()) == d_before);
    CHECK(snapshot(g.parameters()) != g_before);
  }
}

TEST_CASE("zero epochs returns the initial generator") {
  RunConfig c = tiny_run(Architecture::kSetGan);
  c.epochs = 0;
  Tensor data = grid_data(300, 30);
  auto r = train(c, data, grid_data(300, 31));
  CHECK(r.log.epochs.empty());
  CHECK(r.epochs_run == 0);
  CHECK(r.best_epoch == 0);
  Generator fresh = make_generator(c);
  CHECK(snapshot(r.generator.state()) == snapshot(fresh.state()));
}

TEST_CASE("training is deterministic") {
  for (Architecture arch : {Architecture::kGan, Architecture::kMinibatch, Architecture::kPacGan,
                            Architecture::kSetGan}) {
    RunConfig c = tiny_run(arch);
    c.gd_ratio = 2;
    Tensor data = grid_data(400, 32);
    Tensor hold = grid_data(300, 33);
    auto a = train(c, data, hold);
    auto b = train(c, data, hold);
    INFO(architecture_name(arch));
    CHECK(a.log.epochs.size() == 3);
    CHECK(a.log.deterministic_csv() == b.log.deterministic_csv());
    CHECK(snapshot(a.generator.state()) == snapshot(b.generator.state()));
    for (std::size_t e = 0; e < a.log.epochs.size(); ++e) {
      CHECK(a.log.epochs[e].epoch == e + 1);
      CHECK(std::isfinite(a.log.epochs[e].d_loss));
      CHECK(std::isfinite(a.log.epochs[e].g_loss));
      CHECK(a.log.epochs[e].sbd.has_value());
    }
  }
}

TEST_CASE("log cadence and early stopping") {
  RunConfig c = tiny_run(Architecture::kGan);
  c.epochs = 40;
  c.eval_every = 2;
  c.patience = 1;
  c.learning_rate = 1e-6;
  Tensor data = grid_data(400, 34);
  auto r = train(c, data, grid_data(300, 35));
  for (const auto& e : r.log.epochs) CHECK(e.sbd.has_value() == (e.epoch % 2 == 0));
  CHECK(r.stopped_early);
  CHECK(r.epochs_run < 40);
  const auto csv = r.log.to_csv();
  CHECK(csv.rfind("epoch,d_loss,g_loss,sbd,wall_s\n", 0) == 0);
}

TEST_CASE("non-finite values abort with the step named") {
  RunConfig c = tiny_run(Architecture::kGan);
  c.learning_rate = 1e300;
  Tensor data = grid_data(400, 36);
  std::string message;
  try {
    train(c, data, grid_data(300, 37));
  } catch (const NumericalError& e) {
    message = e.what();
  }
  CHECK(message.find("epoch 1, step") != std::string::npos);
}
