#include "setgan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace setgan {

namespace fs = std::filesystem;

void GridDatasetSpec::validate() const {
  if (side < 1) throw ConfigError("grid.side", "must be at least 1");
  if (!(spacing > 0.0)) throw ConfigError("grid.spacing", "must be positive");
  if (!(sigma > 0.0)) throw ConfigError("grid.sigma", "must be positive");
  if (samples < 1) throw ConfigError("grid.samples", "must be at least 1");
}

MixtureSpec GridDatasetSpec::mixture() const { return grid_mixture(side, spacing, sigma); }

Tensor datagen_grid(const GridDatasetSpec& spec) {
  Rng rng(spec.seed);
  return sample_mixture(spec.mixture(), spec.samples, rng);
}

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(const fs::path& path, const Tensor& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t rows = samples.rows(), cols = samples.cols();
  std::string line;
  for (std::size_t i = 0; i < rows; ++i) {
    line.clear();
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) line += ',';
      line += format_number(samples[i * cols + j]);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("error writing " + path.string());
}

Tensor read_csv(const fs::path& path, bool header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (header && lineno == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t n = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      double v = 0.0;
      while (p < end && *p == ' ') ++p;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc())
        throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": not a number");
      values.push_back(v);
      ++n;
      p = res.ptr;
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (*p != ',')
        throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": expected ','");
      ++p;
    }
    if (rows == 0) cols = n;
    else if (n != cols)
      throw DimensionError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(cols) + " columns, got " + std::to_string(n));
    ++rows;
  }
  if (rows == 0) throw DimensionError(path.string() + ": no samples");
  Tensor t(Shape{rows, cols});
  std::copy(values.begin(), values.end(), t.data().begin());
  return t;
}

void EvalProtocol::validate() const {
  if (trials < 1) throw ConfigError("eval.trials", "must be at least 1");
  if (samples < (std::size_t{1} << sbd_depth))
    throw ConfigError("eval.samples", "must be at least 2^eval.sbd_depth");
  if (!(n_std > 0.0)) throw ConfigError("eval.n_std", "must be positive");
  if (!(mode_threshold >= 0.0 && mode_threshold <= 1.0))
    throw ConfigError("eval.mode_threshold", "must be in [0, 1]");
}

void ExperimentConfig::resolve() {
  if (!k_explicit) run.set_size = is_set_architecture(run.architecture) ? 5 : 1;
}

void ExperimentConfig::validate() const {
  run.validate();
  grid.validate();
  eval.validate();
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("data.holdout_fraction", "must be in (0, 1)");
}

// ---------------------------------------------------------------------------
// Configuration schema

namespace {

struct KeyBinding {
  const char* key;
  const char* description;
  std::function<Json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const Json&)> set;
};

template <typename T>
T json_as(const Json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
  } else {
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() < 0) throw ConfigError(key, "must not be negative");
      return static_cast<T>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<T>(d);
    }
    throw ConfigError(key, "expected a non-negative integer");
  }
}

#define SETGAN_KEY(name, desc, type, member)                                              \
  KeyBinding {                                                                            \
    name, desc, [](const ExperimentConfig& c) { return Json(c.member); },                 \
        [](ExperimentConfig& c, const Json& v) { c.member = json_as<type>(v, name); }     \
  }

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> table = {
      KeyBinding{"arch", "discriminator: gan, md, pacgan or setgan",
                 [](const ExperimentConfig& c) { return Json(architecture_name(c.run.architecture)); },
                 [](ExperimentConfig& c, const Json& v) {
                   try {
                     c.run.architecture = parse_architecture(json_as<std::string>(v, "arch"));
                   } catch (const ConfigError&) {
                     throw;
                   } catch (const std::exception& e) {
                     throw ConfigError("arch", e.what());
                   }
                 }},
      KeyBinding{"k", "samples per set (5 for pacgan/setgan, 1 otherwise, unless given)",
                 [](const ExperimentConfig& c) { return Json(c.run.set_size); },
                 [](ExperimentConfig& c, const Json& v) {
                   c.run.set_size = json_as<std::size_t>(v, "k");
                   c.k_explicit = true;
                 }},
      SETGAN_KEY("lr", "Adam learning rate", double, run.learning_rate),
      SETGAN_KEY("gd_ratio", "generator updates per discriminator update", std::size_t,
                 run.gd_ratio),
      SETGAN_KEY("epochs", "epoch ceiling", std::size_t, run.epochs),
      SETGAN_KEY("batch", "sets (pacgan/setgan) or samples (gan/md) per update", std::size_t,
                 run.batch),
      SETGAN_KEY("seed", "run seed", std::uint64_t, run.seed),
      KeyBinding{"gen.loss", "generator objective: nonsaturating or minimax",
                 [](const ExperimentConfig& c) { return Json(generator_loss_name(c.run.generator_loss)); },
                 [](ExperimentConfig& c, const Json& v) {
                   c.run.generator_loss = parse_generator_loss(json_as<std::string>(v, "gen.loss"));
                 }},
      SETGAN_KEY("hist.bins", "soft-histogram bins", std::size_t, run.hist_bins),
      SETGAN_KEY("hist.steepness", "soft-histogram logistic steepness", double,
                 run.hist_steepness),
      SETGAN_KEY("early_stop.every", "epochs between SBD evaluations", std::size_t,
                 run.eval_every),
      SETGAN_KEY("early_stop.samples", "generated samples per SBD evaluation", std::size_t,
                 run.eval_samples),
      SETGAN_KEY("early_stop.patience", "evaluations without improvement before stopping",
                 std::size_t, run.patience),
      SETGAN_KEY("sbd.depth", "partition-tree depth for training-time SBD", std::size_t,
                 run.sbd_depth),
      SETGAN_KEY("latent_dim", "generator input width", std::size_t, run.generator.latent_dim),
      SETGAN_KEY("data.dim", "sample width; must match the data file", std::size_t,
                 run.generator.data_dim),
      SETGAN_KEY("net.g_layers", "generator hidden layers", std::size_t,
                 run.generator.hidden_layers),
      SETGAN_KEY("net.g_width", "generator hidden width", std::size_t,
                 run.generator.hidden_width),
      SETGAN_KEY("net.d_layers", "discriminator maxout layers", std::size_t,
                 run.d_feature_layers),
      SETGAN_KEY("net.d_width", "discriminator maxout width", std::size_t,
                 run.d_feature_width),
      SETGAN_KEY("net.d_pieces", "maxout pieces", std::size_t, run.d_maxout_pieces),
      SETGAN_KEY("net.pair_layers", "setgan pairing layers", std::size_t, run.d_pair_layers),
      SETGAN_KEY("net.pair_width", "setgan pairing width", std::size_t, run.d_pair_width),
      SETGAN_KEY("md.kernels", "minibatch-discrimination kernels", std::size_t, run.md_kernels),
      SETGAN_KEY("md.kernel_dim", "minibatch-discrimination kernel width", std::size_t,
                 run.md_kernel_dim),
      SETGAN_KEY("adam.beta1", "Adam first-moment decay", double, run.adam_beta1),
      SETGAN_KEY("adam.beta2", "Adam second-moment decay", double, run.adam_beta2),
      SETGAN_KEY("data.path", "training CSV; empty synthesizes the grid", std::string,
                 data_path),
      SETGAN_KEY("data.holdout_fraction", "trailing fraction of rows held out for SBD", double,
                 holdout_fraction),
      SETGAN_KEY("grid.side", "grid components per side", std::size_t, grid.side),
      SETGAN_KEY("grid.spacing", "distance between neighbouring centers", double,
                 grid.spacing),
      SETGAN_KEY("grid.sigma", "component standard deviation", double, grid.sigma),
      SETGAN_KEY("grid.samples", "synthesized dataset size", std::size_t, grid.samples),
      SETGAN_KEY("grid.seed", "dataset seed", std::uint64_t, grid.seed),
      SETGAN_KEY("eval.trials", "evaluation trials", std::size_t, eval.trials),
      SETGAN_KEY("eval.samples", "generated samples per trial", std::size_t, eval.samples),
      SETGAN_KEY("eval.sbd_depth", "partition-tree depth for evaluation", std::size_t,
                 eval.sbd_depth),
      SETGAN_KEY("eval.n_std", "high-quality radius in standard deviations", double,
                 eval.n_std),
      SETGAN_KEY("eval.mode_threshold", "fraction of samples a covered mode must receive",
                 double, eval.mode_threshold),
  };
  return table;
}

#undef SETGAN_KEY

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Json config_to_json(const ExperimentConfig& config) {
  Json j = Json::object();
  for (const auto& b : bindings()) j[b.key] = b.get(config);
  return j;
}

void apply_config_json(ExperimentConfig& config, const Json& j) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto b = std::find_if(bindings().begin(), bindings().end(),
                          [&](const KeyBinding& kb) { return it.key() == kb.key; });
    if (b == bindings().end()) throw ConfigError(it.key(), "unknown configuration key");
    b->set(config, it.value());
  }
}

void apply_config_override(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  Json j = Json::object();
  j[key] = value;
  apply_config_json(config, j);
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config", path.string() + " is not valid JSON");
  ExperimentConfig config;
  apply_config_json(config, j);
  return config;
}

std::vector<ConfigKey> config_schema() {
  ExperimentConfig defaults;
  std::vector<ConfigKey> out;
  for (const auto& b : bindings())
    out.push_back({b.key, b.get(defaults).dump(), b.description});
  return out;
}

Dataset load_dataset(const ExperimentConfig& config) {
  Tensor all = config.data_path.empty() ? datagen_grid(config.grid) : read_csv(config.data_path);
  const std::size_t n = all.rows(), d = all.cols();
  if (d != config.run.generator.data_dim)
    throw ConfigError("data.path", "data has " + std::to_string(d) +
                                       " columns but the generator emits " +
                                       std::to_string(config.run.generator.data_dim));
  const auto held = static_cast<std::size_t>(std::llround(config.holdout_fraction * n));
  if (held < (std::size_t{1} << config.run.sbd_depth) || held >= n)
    throw ConfigError("data.holdout_fraction",
                      "held-out slice of " + std::to_string(held) + " rows is too small for " +
                          "the SBD tree or leaves no training data");
  Dataset ds;
  ds.train = Tensor(Shape{n - held, d});
  ds.holdout = Tensor(Shape{held, d});
  std::copy_n(all.data().begin(), (n - held) * d, ds.train.data().begin());
  std::copy_n(all.data().begin() + (n - held) * d, held * d, ds.holdout.data().begin());
  return ds;
}

// ---------------------------------------------------------------------------
// Evaluation

const MixtureSpec* config_mixture(const ExperimentConfig& config, MixtureSpec& storage,
                                  std::size_t data_dim) {
  if (data_dim != 2) return nullptr;
  storage = config.grid.mixture();
  return &storage;
}

std::vector<MetricSummary> evaluate_sampler(const Sampler& sampler, const Tensor& holdout,
                                            const MixtureSpec* mixture,
                                            const EvalProtocol& protocol, std::uint64_t seed) {
  protocol.validate();
  const PartitionTree tree = build_partition_tree(holdout, protocol.sbd_depth);
  const BinHistogram reference = assign_histogram(tree, holdout);
  std::vector<std::string> names{"sbd", "fid"};
  if (mixture) names.insert(names.end(), {"is", "hq", "modes"});
  std::vector<std::vector<double>> values(names.size());
  Rng rng(seed);
  for (std::size_t t = 0; t < protocol.trials; ++t) {
    const Tensor samples = sampler(protocol.samples, rng);
    values[0].push_back(sbd(reference, assign_histogram(tree, samples)));
    values[1].push_back(frechet_distance(samples, holdout));
    if (mixture) {
      values[2].push_back(analytic_inception_score(samples, *mixture));
      values[3].push_back(high_quality_fraction(samples, *mixture, protocol.n_std));
      values[4].push_back(
          static_cast<double>(mode_coverage(samples, *mixture, protocol.mode_threshold)));
    }
  }
  std::vector<MetricSummary> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& v = values[i];
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out.push_back({names[i], mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0, v.size()});
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricSummary>& metrics) {
  std::string s = "metric,value,stderr,trials\n";
  for (const auto& m : metrics)
    s += m.metric + "," + format_number(m.mean) + "," + format_number(m.std) + "," +
         std::to_string(m.trials) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Runs

std::string run_id(const ExperimentConfig& config) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_to_json(config).dump())));
  return architecture_name(config.run.architecture) + "-k" +
         std::to_string(config.run.set_size) + "-s" + std::to_string(config.run.seed) + "-" +
         std::string(hash, 8);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

}  // namespace

RunSummary run_training(const ExperimentConfig& config, const fs::path& out_dir,
                        std::ostream* progress) {
  config.validate();
  const Dataset data = load_dataset(config);
  fs::create_directories(out_dir / "checkpoints");
  write_text(out_dir / "config.json", config_to_json(config).dump(2) + "\n");

  RunSummary summary;
  summary.run_id = run_id(config);
  summary.directory = out_dir;

  Generator initial = make_generator(config.run);
  save_checkpoint(out_dir / "checkpoints" / "initial.json", initial.state());

  auto write_run_json = [&](const char* status) {
    Json r = Json::object();
    r["run_id"] = summary.run_id;
    r["status"] = status;
    r["epochs_run"] = summary.epochs_run;
    r["best_epoch"] = summary.best_epoch;
    r["best_sbd"] = summary.best_sbd;
    r["stopped_early"] = summary.stopped_early;
    write_text(out_dir / "run.json", r.dump(2) + "\n");
  };

  if (config.run.epochs == 0) {
    write_text(out_dir / "log.csv", TrainingLog{}.to_csv());
    write_run_json("initialized");
    return summary;
  }

  std::ofstream log(out_dir / "log.csv", std::ios::binary);
  log << "epoch,d_loss,g_loss,sbd,wall_s\n";
  TrainResult result;
  try {
    result = train(config.run, data.train, data.holdout, [&](const EpochRecord& e) {
      TrainingLog one;
      one.epochs.push_back(e);
      const std::string csv = one.to_csv();
      log << csv.substr(csv.find('\n') + 1);
      log.flush();
      if (progress) {
        *progress << "epoch " << e.epoch << "  d_loss " << e.d_loss << "  g_loss " << e.g_loss;
        if (e.sbd) *progress << "  sbd " << *e.sbd;
        *progress << "\n";
        progress->flush();
      }
    });
  } catch (const NumericalError&) {
    write_run_json("numerical-abort");
    throw;
  }
  summary.epochs_run = result.epochs_run;
  summary.best_epoch = result.best_epoch;
  summary.best_sbd = result.best_sbd;
  summary.stopped_early = result.stopped_early;
  save_checkpoint(out_dir / "checkpoints" / "best.json", result.generator.state());
  write_run_json("completed");
  return summary;
}

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "config.json"))
    throw ConfigError("run", "no config.json in " + run_dir.string());
  const fs::path best = run_dir / "checkpoints" / "best.json";
  if (!fs::exists(best)) throw ConfigError("run", "no best checkpoint in " + run_dir.string());
  LoadedRun run{load_config_file(run_dir / "config.json"), Generator{}};
  run.config.validate();
  run.generator = make_generator(run.config.run);
  load_checkpoint(best, run.generator.state());
  return run;
}

// ---------------------------------------------------------------------------
// Sweeps

void SweepSpec::validate() const {
  if (architectures.empty()) throw ConfigError("archs", "at least one architecture");
  if (!(lr_low > 0.0 && lr_low < lr_high)) throw ConfigError("lr-range", "need 0 < low < high");
  if (lr_draws < 1) throw ConfigError("lr-draws", "must be at least 1");
  if (gd_ratios.empty()) throw ConfigError("gd-ratios", "at least one ratio");
  for (std::size_t r : gd_ratios)
    if (r < 1) throw ConfigError("gd-ratios", "ratios must be at least 1");
  if (seeds < 1) throw ConfigError("seeds", "must be at least 1");
  if (jobs < 1) throw ConfigError("jobs", "must be at least 1");
}

std::vector<SweepCell> sweep_cells(const SweepSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> lr_dist(spec.lr_low, spec.lr_high);
  std::vector<double> lrs(spec.lr_draws);
  for (double& lr : lrs) lr = lr_dist(rng);
  std::vector<SweepCell> cells;
  for (Architecture arch : spec.architectures)
    for (double lr : lrs)
      for (std::size_t ratio : spec.gd_ratios)
        for (std::size_t s = 0; s < spec.seeds; ++s)
          cells.push_back({arch, lr, ratio, spec.seed + s});
  return cells;
}

namespace {

std::string run_cell(const ExperimentConfig& base, const SweepCell& cell, const Dataset& data,
                     const MixtureSpec* mixture) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig config = base;
  config.run.architecture = cell.architecture;
  config.run.learning_rate = cell.learning_rate;
  config.run.gd_ratio = cell.gd_ratio;
  config.run.seed = cell.seed;
  if (!is_set_architecture(cell.architecture)) config.run.set_size = 1;
  else if (config.run.set_size < 2) config.run.set_size = 5;

  std::string row = architecture_name(cell.architecture) + "," +
                    format_number(cell.learning_rate) + "," + std::to_string(cell.gd_ratio) +
                    "," + std::to_string(cell.seed) + ",";
  std::string status = "ok";
  std::string metrics = ",,,,";
  try {
    config.validate();
    TrainResult result = train(config.run, data.train, data.holdout);
    Generator& g = result.generator;
    auto values = evaluate_sampler([&g](std::size_t n, Rng& rng) { return g.generate(n, rng); },
                                   data.holdout, mixture, config.eval, cell.seed);
    auto get = [&](const char* name) -> std::string {
      for (const auto& m : values)
        if (m.metric == name) return format_number(m.mean);
      return "";
    };
    metrics = get("sbd") + "," + get("is") + "," + get("hq") + "," + get("modes") + "," +
              std::to_string(result.epochs_run);
  } catch (const NumericalError&) {
    status = "numerical-abort";
  } catch (const ConfigError&) {
    status = "config-error";
  } catch (const std::exception&) {
    status = "error";
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", wall);
  return row + metrics + "," + status + "," + buf;
}

}  // namespace

std::size_t run_sweep(const ExperimentConfig& base, const SweepSpec& spec, std::ostream& out) {
  const std::vector<SweepCell> cells = sweep_cells(spec);
  const Dataset data = load_dataset(base);
  MixtureSpec storage;
  const MixtureSpec* mixture = config_mixture(base, storage, data.train.cols());

  std::vector<std::optional<std::string>> rows(cells.size());
  std::size_t next_row = 0;
  std::mutex mu;
  std::atomic<std::size_t> next_cell{0};

  out << kSweepHeader << "\n";
  out.flush();
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next_cell.fetch_add(1);
      if (i >= cells.size()) return;
      std::string row = run_cell(base, cells[i], data, mixture);
      std::lock_guard<std::mutex> lock(mu);
      rows[i] = std::move(row);
      while (next_row < rows.size() && rows[next_row]) {
        out << *rows[next_row] << "\n";
        ++next_row;
      }
      out.flush();
    }
  };
  const std::size_t jobs = std::min(spec.jobs, cells.size());
  std::vector<std::thread> threads;
  for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::size_t failed = 0;
  for (const auto& r : rows)
    if (r->find(",ok,") == std::string::npos) ++failed;
  return failed;
}

std::string sweep_report(std::istream& sweep_csv) {
  std::string line;
  if (!std::getline(sweep_csv, line) || line != kSweepHeader)
    throw DimensionError("sweep report: unexpected header '" + line + "'");
  struct Group {
    std::size_t runs = 0;
    std::vector<std::pair<double, double>> sbd_lr;
  };
  std::map<std::pair<std::string, std::size_t>, Group> groups;
  std::size_t lineno = 1;
  while (std::getline(sweep_csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (f.size() != 11)
      throw DimensionError("sweep report: line " + std::to_string(lineno) + " has " +
                           std::to_string(f.size()) + " fields");
    Group& g = groups[{f[0], std::stoul(f[2])}];
    ++g.runs;
    if (f[9] == "ok" && !f[4].empty()) g.sbd_lr.emplace_back(std::stod(f[4]), std::stod(f[1]));
  }
  std::string out = "arch,gd_ratio,runs,ok,sbd_mean,sbd_median,sbd_min,best_lr\n";
  for (auto& [key, g] : groups) {
    out += key.first + "," + std::to_string(key.second) + "," + std::to_string(g.runs) + "," +
           std::to_string(g.sbd_lr.size()) + ",";
    if (g.sbd_lr.empty()) {
      out += ",,,\n";
      continue;
    }
    std::sort(g.sbd_lr.begin(), g.sbd_lr.end());
    double mean = 0.0;
    for (auto& p : g.sbd_lr) mean += p.first;
    mean /= static_cast<double>(g.sbd_lr.size());
    const std::size_t n = g.sbd_lr.size();
    const double median = n % 2 ? g.sbd_lr[n / 2].first
                                : 0.5 * (g.sbd_lr[n / 2 - 1].first + g.sbd_lr[n / 2].first);
    out += format_number(mean) + "," + format_number(median) + "," +
           format_number(g.sbd_lr.front().first) + "," + format_number(g.sbd_lr.front().second) +
           "\n";
  }
  return out;
}

}  // namespace setgan
