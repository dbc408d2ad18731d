#pragma once

// Run orchestration behind the command-line tool: synthetic datasets, the
// JSON configuration schema, run directories, evaluation, sweeps and reports.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "setgan/metrics.hpp"
#include "setgan/training.hpp"

namespace setgan {

using Json = nlohmann::ordered_json;

struct GridDatasetSpec {
  std::size_t side = 5;
  double spacing = 2.0;
  double sigma = 0.05;
  std::size_t samples = 25000;
  std::uint64_t seed = 1;

  void validate() const;
  MixtureSpec mixture() const;
};

Tensor datagen_grid(const GridDatasetSpec& spec);

// One sample per row, comma separated, no header unless `header` is set.
void write_csv(const std::filesystem::path& path, const Tensor& samples);
Tensor read_csv(const std::filesystem::path& path, bool header = false);
// Shortest representation that parses back to the same double.
std::string format_number(double v);

struct EvalProtocol {
  std::size_t trials = 10;
  std::size_t samples = 4000;
  std::size_t sbd_depth = 5;
  double n_std = 3.0;
  double mode_threshold = 0.01;

  void validate() const;
};

// Everything a run needs. Serialized as flat dotted keys.
struct ExperimentConfig {
  RunConfig run;
  std::string data_path;  // empty: synthesize from `grid`
  double holdout_fraction = 0.2;
  GridDatasetSpec grid;
  EvalProtocol eval;
  // Unless set explicitly, k follows the architecture: 5 for set-based
  // discriminators, 1 otherwise.
  bool k_explicit = false;

  void resolve();
  void validate() const;
};

Json config_to_json(const ExperimentConfig& config);
// Applies the keys present in `j`; unknown keys and bad values throw
// ConfigError naming the key.
void apply_config_json(ExperimentConfig& config, const Json& j);
// "key=value" override; the value is parsed as JSON, falling back to a string.
void apply_config_override(ExperimentConfig& config, const std::string& assignment);
ExperimentConfig load_config_file(const std::filesystem::path& path);
// Documented schema: key, default value, description.
struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string description;
};
std::vector<ConfigKey> config_schema();

struct Dataset {
  Tensor train;
  Tensor holdout;
};

// Reads data_path (or synthesizes the grid) and splits off the trailing
// holdout_fraction of rows as the held-out slice.
Dataset load_dataset(const ExperimentConfig& config);

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over trials; 0 for one trial
  std::size_t trials = 0;
};

using Sampler = std::function<Tensor(std::size_t n, Rng& rng)>;

// Per trial: draw protocol.samples points and score them against the
// held-out slice (SBD, Frechet distance) and, when `mixture` is given,
// against the known mixture (inception score, high-quality fraction, modes).
std::vector<MetricSummary> evaluate_sampler(const Sampler& sampler, const Tensor& holdout,
                                            const MixtureSpec* mixture,
                                            const EvalProtocol& protocol, std::uint64_t seed);
std::string metrics_csv(const std::vector<MetricSummary>& metrics);

// Mixture used for mixture-aware metrics, if the config describes one that
// matches the data width.
const MixtureSpec* config_mixture(const ExperimentConfig& config, MixtureSpec& storage,
                                  std::size_t data_dim);

struct RunSummary {
  std::string run_id;
  std::filesystem::path directory;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_sbd = 0.0;
  bool stopped_early = false;
};

// Deterministic identifier derived from the resolved configuration.
std::string run_id(const ExperimentConfig& config);

// Layout: config.json (resolved config), run.json, log.csv,
// checkpoints/initial.json and, when epochs > 0, checkpoints/best.json.
RunSummary run_training(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                        std::ostream* progress = nullptr);

// Loads the resolved config and best generator checkpoint of a run.
struct LoadedRun {
  ExperimentConfig config;
  Generator generator;
};
LoadedRun load_run(const std::filesystem::path& run_dir);

struct SweepSpec {
  std::vector<Architecture> architectures{Architecture::kGan, Architecture::kSetGan};
  double lr_low = 2e-5;
  double lr_high = 2e-3;
  std::size_t lr_draws = 4;
  std::vector<std::size_t> gd_ratios{1, 2, 3};
  std::size_t seeds = 1;
  std::uint64_t seed = 7;  // drives the learning-rate draws and run seeds
  std::size_t jobs = 1;

  void validate() const;
};

struct SweepCell {
  Architecture architecture = Architecture::kGan;
  double learning_rate = 0.0;
  std::size_t gd_ratio = 1;
  std::uint64_t seed = 0;
};

// Cells in output order: architecture, then lr draw, then ratio, then seed.
std::vector<SweepCell> sweep_cells(const SweepSpec& spec);

inline constexpr const char* kSweepHeader =
    "arch,lr,gd_ratio,seed,sbd,is,hq,modes,epochs_run,status,wall_s";

// Runs every cell (in parallel up to spec.jobs) and writes one row per cell
// to `out` in cell order as results become available. Failed cells are
// reported in the status column. Set-based cells use base.run.set_size;
// the others use k = 1. Returns the number of failed cells.
std::size_t run_sweep(const ExperimentConfig& base, const SweepSpec& spec, std::ostream& out);

// Per (arch, gd_ratio): runs, successes, mean/median/min SBD and the lr of
// the best run, from a sweep results CSV.
std::string sweep_report(std::istream& sweep_csv);

}  // namespace setgan
