// Command-line front end: datagen, train, eval, sweep, sbd, report.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "setgan/harness.hpp"

namespace fs = std::filesystem;
using namespace setgan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::size_t default_jobs() {
  if (const char* env = std::getenv("SETGAN_JOBS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return 1;
}

// Flags shared by train and sweep that map onto configuration keys.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string arch, data, gen_loss;
  std::optional<std::size_t> k, gd_ratio, epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app, bool run_flags) {
    app->add_option("--config", config_path, "JSON config file with flat dotted keys")
        ->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "override a config key, e.g. --set net.d_width=64");
    app->add_option("--data", data, "training CSV (default: synthesize the grid)");
    app->add_option("--epochs", epochs, "epoch ceiling");
    app->add_option("--batch", batch, "sets or samples per update");
    app->add_option("--gen-loss", gen_loss, "nonsaturating or minimax");
    if (run_flags) {
      app->add_option("--arch", arch, "gan, md, pacgan or setgan");
      app->add_option("--k", k, "samples per set");
      app->add_option("--lr", lr, "learning rate");
      app->add_option("--gd-ratio", gd_ratio, "generator updates per discriminator update");
      app->add_option("--seed", seed, "run seed");
    }
  }

  ExperimentConfig build() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
    Json j = Json::object();
    if (!arch.empty()) j["arch"] = arch;
    if (k) j["k"] = *k;
    if (lr) j["lr"] = *lr;
    if (gd_ratio) j["gd_ratio"] = *gd_ratio;
    if (epochs) j["epochs"] = *epochs;
    if (batch) j["batch"] = *batch;
    if (seed) j["seed"] = *seed;
    if (!data.empty()) j["data.path"] = data;
    if (!gen_loss.empty()) j["gen.loss"] = gen_loss;
    apply_config_json(c, j);
    for (const auto& o : overrides) apply_config_override(c, o);
    c.resolve();
    c.validate();
    return c;
  }
};

std::string schema_text() {
  std::ostringstream s;
  s << "Configuration keys (JSON object, flat dotted keys):\n";
  for (const auto& k : config_schema())
    s << "  " << k.key << " = " << k.default_value << "\n      " << k.description << "\n";
  return s.str();
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Set-based GAN discriminators and distribution metrics"};
  app.require_subcommand(1);

  // datagen
  GridDatasetSpec grid;
  std::string datagen_out;
  auto* datagen = app.add_subcommand("datagen", "write a 2D Gaussian-grid dataset as CSV");
  datagen->add_option("--out,-o", datagen_out, "output CSV")->required();
  datagen->add_option("--side", grid.side, "components per side")->capture_default_str();
  datagen->add_option("--spacing", grid.spacing, "distance between centers")->capture_default_str();
  datagen->add_option("--sigma", grid.sigma, "component standard deviation")->capture_default_str();
  datagen->add_option("--samples,-n", grid.samples, "sample count")->capture_default_str();
  datagen->add_option("--seed", grid.seed, "random seed")->capture_default_str();

  // train
  ConfigFlags train_flags;
  std::string train_out;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a generator; writes a run directory");
  train_cmd->footer(schema_text());
  train_flags.add_to(train_cmd, true);
  train_cmd->add_option("--out,-o", train_out, "run directory (default runs/<run id>)");
  train_cmd->add_flag("--quiet,-q", quiet, "no per-epoch progress");

  // eval
  std::string eval_run, eval_out;
  std::optional<std::size_t> eval_trials, eval_samples, eval_depth;
  std::optional<std::uint64_t> eval_seed;
  bool ground_truth = false;
  auto* eval_cmd = app.add_subcommand("eval", "score a trained run over repeated trials");
  eval_cmd->add_option("run", eval_run, "run directory")->required();
  eval_cmd->add_option("--out,-o", eval_out, "metrics CSV (default: stdout)");
  eval_cmd->add_option("--trials", eval_trials, "trials (default from config, 10)");
  eval_cmd->add_option("--samples", eval_samples, "samples per trial (default 4000)");
  eval_cmd->add_option("--depth", eval_depth, "SBD tree depth (default 5)");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed (default: run seed)");
  eval_cmd->add_flag("--ground-truth", ground_truth,
                     "score the true grid sampler instead of the generator");

  // sweep
  ConfigFlags sweep_flags;
  SweepSpec sweep;
  std::vector<std::string> sweep_archs{"gan", "setgan"};
  std::string sweep_out;
  sweep.jobs = default_jobs();
  auto* sweep_cmd = app.add_subcommand("sweep", "train and score a grid of runs");
  sweep_cmd->footer(schema_text());
  sweep_flags.add_to(sweep_cmd, false);
  sweep_cmd->add_option("--archs", sweep_archs, "architectures")->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--lr-low", sweep.lr_low, "learning-rate range low")->capture_default_str();
  sweep_cmd->add_option("--lr-high", sweep.lr_high, "learning-rate range high")
      ->capture_default_str();
  sweep_cmd->add_option("--lr-draws", sweep.lr_draws, "learning rates drawn uniformly")
      ->capture_default_str();
  sweep_cmd->add_option("--gd-ratios", sweep.gd_ratios, "GD ratios")->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep.seeds, "seeds per cell")->capture_default_str();
  sweep_cmd->add_option("--seed", sweep.seed, "sweep seed")->capture_default_str();
  sweep_cmd->add_option("--jobs,-j", sweep.jobs, "parallel runs (default $SETGAN_JOBS or 1)");
  sweep_cmd->add_option("--out,-o", sweep_out, "results CSV (default: stdout)");

  // sbd
  std::string sbd_real, sbd_fake;
  std::size_t sbd_depth = 5, haar_levels = 0;
  bool sbd_header = false;
  auto* sbd_cmd = app.add_subcommand("sbd", "space binning distance between two sample files");
  sbd_cmd->add_option("real", sbd_real, "reference CSV (the tree is built on it)")
      ->required()->check(CLI::ExistingFile);
  sbd_cmd->add_option("fake", sbd_fake, "compared CSV")->required()->check(CLI::ExistingFile);
  sbd_cmd->add_option("--depth", sbd_depth, "tree depth")->capture_default_str();
  sbd_cmd->add_option("--haar", haar_levels,
                      "treat rows as square images and report per-level SBD over this many "
                      "Haar levels");
  sbd_cmd->add_flag("--header", sbd_header, "skip one header line in each file");

  // report
  std::string report_in, report_out;
  auto* report_cmd = app.add_subcommand("report", "summarize a sweep results CSV");
  report_cmd->add_option("sweep_csv", report_in, "sweep results")->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--out,-o", report_out, "summary CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*datagen) {
      grid.validate();
      write_csv(datagen_out, datagen_grid(grid));
    } else if (*train_cmd) {
      const ExperimentConfig config = train_flags.build();
      const fs::path out = train_out.empty() ? fs::path("runs") / run_id(config) : fs::path(train_out);
      const RunSummary s = run_training(config, out, quiet ? nullptr : &std::cerr);
      std::cout << "run " << s.run_id << " -> " << s.directory.string() << "\n";
      if (config.run.epochs > 0)
        std::cout << "epochs " << s.epochs_run << ", best epoch " << s.best_epoch
                  << ", best sbd " << s.best_sbd << (s.stopped_early ? " (early stop)" : "")
                  << "\n";
    } else if (*eval_cmd) {
      ExperimentConfig config;
      std::optional<LoadedRun> run;
      if (ground_truth) {
        const fs::path cfg = fs::path(eval_run) / "config.json";
        if (!fs::exists(cfg)) throw ConfigError("run", "no config.json in " + eval_run);
        config = load_config_file(cfg);
      } else {
        run = load_run(eval_run);
        config = run->config;
      }
      if (eval_trials) config.eval.trials = *eval_trials;
      if (eval_samples) config.eval.samples = *eval_samples;
      if (eval_depth) config.eval.sbd_depth = *eval_depth;
      const Dataset data = load_dataset(config);
      MixtureSpec storage;
      const MixtureSpec* mixture = config_mixture(config, storage, data.holdout.cols());
      Sampler sampler;
      if (ground_truth) {
        if (!mixture) throw ConfigError("eval", "--ground-truth needs a 2D grid configuration");
        sampler = [mixture](std::size_t n, Rng& rng) { return sample_mixture(*mixture, n, rng); };
      } else {
        Generator& g = run->generator;
        sampler = [&g](std::size_t n, Rng& rng) { return g.generate(n, rng); };
      }
      const auto metrics = evaluate_sampler(sampler, data.holdout, mixture, config.eval,
                                            eval_seed.value_or(config.run.seed));
      write_or_print(eval_out, metrics_csv(metrics));
    } else if (*sweep_cmd) {
      ExperimentConfig base = sweep_flags.build();
      sweep.architectures.clear();
      for (const auto& a : sweep_archs) {
        try {
          sweep.architectures.push_back(parse_architecture(a));
        } catch (const std::exception& e) {
          throw ConfigError("archs", e.what());
        }
      }
      sweep.validate();
      std::size_t failed = 0;
      if (sweep_out.empty() || sweep_out == "-") {
        failed = run_sweep(base, sweep, std::cout);
      } else {
        std::ofstream out(sweep_out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + sweep_out);
        failed = run_sweep(base, sweep, out);
      }
      if (failed) std::cerr << failed << " sweep cell(s) failed; see the status column\n";
    } else if (*sbd_cmd) {
      const Tensor real = read_csv(sbd_real, sbd_header);
      const Tensor fake = read_csv(sbd_fake, sbd_header);
      if (real.cols() != fake.cols())
        throw DimensionError("width mismatch: " + std::to_string(real.cols()) + " vs " +
                             std::to_string(fake.cols()) + " columns");
      if (haar_levels == 0) {
        std::cout << "sbd," << format_number(sbd_between(real, fake, sbd_depth)) << "\n";
      } else {
        const MultiscaleSbd ms = multiscale_sbd(real, fake, sbd_depth, haar_levels);
        for (std::size_t l = 0; l < ms.per_level.size(); ++l)
          std::cout << "level" << (l + 1) << "," << format_number(ms.per_level[l]) << "\n";
        std::cout << "average," << format_number(ms.average) << "\n";
      }
    } else if (*report_cmd) {
      std::ifstream in(report_in, std::ios::binary);
      write_or_print(report_out, sweep_report(in));
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {  // DimensionError and friends
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::logic_error& e) {  // ContractError, DomainError
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
