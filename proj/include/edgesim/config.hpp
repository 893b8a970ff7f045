#pragma once

// Experiment configuration files (YAML). Every key is optional except `mode`
// and `sweep`; unknown keys are rejected. See README.md for the full schema.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "edgesim/centralized.hpp"
#include "edgesim/dataset.hpp"
#include "edgesim/learner.hpp"

namespace edgesim {

/// Carries every problem found in a configuration, one per line, each
/// prefixed with its field path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out = "invalid configuration:";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
  }
  std::vector<std::string> problems_;
};

enum class Mode { centralized, distributed };
enum class SweepAxis { blocks, tx_snr_db, threshold_db, ratio, wds };

inline const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::blocks: return "N";
    case SweepAxis::tx_snr_db: return "tx_snr_db";
    case SweepAxis::threshold_db: return "threshold_db";
    case SweepAxis::ratio: return "ratio";
    case SweepAxis::wds: return "K";
  }
  return "?";
}

struct DatasetSource {
  enum class Kind { mnist, blobs };
  Kind kind = Kind::mnist;

  std::filesystem::path dir = "data/mnist-5k";
  std::string train_images = "train-images-idx3-ubyte";
  std::string train_labels = "train-labels-idx1-ubyte";
  std::string test_images = "t10k-images-idx3-ubyte";
  std::string test_labels = "t10k-labels-idx1-ubyte";
  std::size_t train_size = 2000;  ///< 0 keeps the whole file
  std::size_t test_size = 1000;
  std::uint64_t subset_seed = 7;

  std::size_t classes = 10;
  std::size_t dims = 20;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  double separation = 3.0;
};

struct ExperimentConfig {
  Mode mode = Mode::centralized;
  DatasetSource dataset;
  TrainConfig learner{1e-4, 1};
  int local_epochs = 10;
  bool local_tail_average = true;
  double tx_snr_db = 4.0;

  // centralized
  std::size_t central_blocks = 1000;
  double gamma_high_db = -10.0;
  double gamma_low_db = -30.0;
  double gamma_db = -20.0;
  bool threshold_sweep_high = true;  ///< threshold_db sweeps gamma_high (else gamma_low)
  std::size_t eval_every = 0;
  ConvergenceRule convergence;
  std::optional<std::filesystem::path> trace_dir;

  // distributed
  std::size_t dist_blocks = 200;
  SplitSpec::Mode split_mode = SplitSpec::Mode::ratio;
  std::size_t wds = 2;
  double ratio = 1.0;

  std::vector<std::string> schemes;
  SweepAxis axis = SweepAxis::blocks;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  std::size_t threads = 0;  ///< 0: hardware concurrency
  bool record_timing = false;
  std::filesystem::path output = "results.csv";
  std::vector<double> grid_db;

  std::size_t blocks() const { return mode == Mode::centralized ? central_blocks : dist_blocks; }
};

inline std::vector<std::string> schemes_for(Mode m) {
  if (m == Mode::centralized) return {"proposed", "equal_importance"};
  return {"proposed", "equal_allocation", "largest_only"};
}

namespace detail {

class ConfigReader {
 public:
  std::vector<std::string> problems;

  void check_keys(const YAML::Node& node, const std::string& path,
                  const std::set<std::string>& allowed) {
    if (!node.IsMap()) {
      problems.push_back(path + ": expected a mapping");
      return;
    }
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) problems.push_back(join(path, key) + ": unknown key");
    }
  }

  template <class T>
  void read(const YAML::Node& parent, const std::string& path, const char* key, T& out) {
    const auto node = parent[key];
    if (!node) return;
    try {
      out = node.as<T>();
    } catch (const YAML::Exception&) {
      problems.push_back(join(path, key) + ": cannot parse '" + YAML::Dump(node) + "'");
    }
  }

  void read_size(const YAML::Node& parent, const std::string& path, const char* key,
                 std::size_t& out) {
    long long v = static_cast<long long>(out);
    const auto before = problems.size();
    read(parent, path, key, v);
    if (problems.size() != before) return;
    if (v < 0) {
      problems.push_back(join(path, key) + ": must be >= 0");
      return;
    }
    out = static_cast<std::size_t>(v);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

}  // namespace detail

inline ExperimentConfig parse_config_node(const YAML::Node& root) {
  detail::ConfigReader r;
  ExperimentConfig cfg;
  if (!root || !root.IsMap()) throw ConfigError({"<root>: expected a mapping"});

  r.check_keys(root, "", {"mode", "seed", "trials", "seeds", "threads", "output", "record_timing",
                          "dataset", "learner", "channel", "centralized", "distributed",
                          "schemes", "sweep", "gridsearch"});

  std::string mode;
  if (!root["mode"]) {
    r.problems.push_back("mode: missing required key (centralized | distributed)");
  } else {
    r.read(root, "", "mode", mode);
    if (mode == "centralized") {
      cfg.mode = Mode::centralized;
    } else if (mode == "distributed") {
      cfg.mode = Mode::distributed;
      cfg.tx_snr_db = 20.0;
    } else if (!mode.empty()) {
      r.problems.push_back("mode: must be 'centralized' or 'distributed', got '" + mode + "'");
    }
  }

  std::uint64_t base_seed = 1;
  std::size_t trials = 10;
  r.read(root, "", "seed", base_seed);
  r.read_size(root, "", "trials", trials);
  if (trials < 1) r.problems.push_back("trials: must be >= 1");
  if (root["seeds"]) {
    r.read(root, "", "seeds", cfg.seeds);
    if (cfg.seeds.empty()) r.problems.push_back("seeds: must list at least one seed");
    if (root["trials"] || root["seed"]) r.problems.push_back("seeds: give either 'seeds' or 'seed'/'trials', not both");
  } else {
    for (std::size_t j = 0; j < trials; ++j) cfg.seeds.push_back(base_seed + j);
  }
  r.read_size(root, "", "threads", cfg.threads);
  std::string output = cfg.output.string();
  r.read(root, "", "output", output);
  cfg.output = output;
  r.read(root, "", "record_timing", cfg.record_timing);

  if (const auto ds = root["dataset"]) {
    r.check_keys(ds, "dataset", {"source", "dir", "train_images", "train_labels", "test_images",
                                 "test_labels", "train_size", "test_size", "subset_seed",
                                 "classes", "dims", "train_per_class", "test_per_class",
                                 "separation"});
    auto& d = cfg.dataset;
    std::string source = "mnist";
    r.read(ds, "dataset", "source", source);
    if (source == "mnist") {
      d.kind = DatasetSource::Kind::mnist;
    } else if (source == "blobs") {
      d.kind = DatasetSource::Kind::blobs;
    } else {
      r.problems.push_back("dataset.source: must be 'mnist' or 'blobs', got '" + source + "'");
    }
    std::string dir = d.dir.string();
    r.read(ds, "dataset", "dir", dir);
    d.dir = dir;
    r.read(ds, "dataset", "train_images", d.train_images);
    r.read(ds, "dataset", "train_labels", d.train_labels);
    r.read(ds, "dataset", "test_images", d.test_images);
    r.read(ds, "dataset", "test_labels", d.test_labels);
    r.read_size(ds, "dataset", "train_size", d.train_size);
    r.read_size(ds, "dataset", "test_size", d.test_size);
    r.read(ds, "dataset", "subset_seed", d.subset_seed);
    r.read_size(ds, "dataset", "classes", d.classes);
    r.read_size(ds, "dataset", "dims", d.dims);
    r.read_size(ds, "dataset", "train_per_class", d.train_per_class);
    r.read_size(ds, "dataset", "test_per_class", d.test_per_class);
    r.read(ds, "dataset", "separation", d.separation);
    if (d.kind == DatasetSource::Kind::blobs) {
      if (d.classes < 1 || d.dims < 1 || d.train_per_class < 1 || d.test_per_class < 1) {
        r.problems.push_back("dataset: blob counts (classes, dims, *_per_class) must be >= 1");
      }
      if (!(d.separation > 0.0)) r.problems.push_back("dataset.separation: must be > 0");
    }
  }

  if (const auto l = root["learner"]) {
    r.check_keys(l, "learner", {"lambda", "epochs", "local_epochs", "local_tail_average"});
    r.read(l, "learner", "lambda", cfg.learner.lambda);
    r.read(l, "learner", "epochs", cfg.learner.epochs);
    r.read(l, "learner", "local_epochs", cfg.local_epochs);
    r.read(l, "learner", "local_tail_average", cfg.local_tail_average);
  }
  if (!(cfg.learner.lambda > 0.0)) r.problems.push_back("learner.lambda: must be > 0");
  if (cfg.learner.epochs < 1) r.problems.push_back("learner.epochs: must be >= 1");
  if (cfg.local_epochs < 1) r.problems.push_back("learner.local_epochs: must be >= 1");

  if (const auto ch = root["channel"]) {
    r.check_keys(ch, "channel", {"tx_snr_db"});
    r.read(ch, "channel", "tx_snr_db", cfg.tx_snr_db);
  }

  if (const auto c = root["centralized"]) {
    r.check_keys(c, "centralized", {"blocks", "gamma_high_db", "gamma_low_db", "gamma_db",
                                    "threshold_sweep", "eval_every", "convergence", "trace_dir"});
    r.read_size(c, "centralized", "blocks", cfg.central_blocks);
    r.read(c, "centralized", "gamma_high_db", cfg.gamma_high_db);
    r.read(c, "centralized", "gamma_low_db", cfg.gamma_low_db);
    r.read(c, "centralized", "gamma_db", cfg.gamma_db);
    std::string target = "high";
    r.read(c, "centralized", "threshold_sweep", target);
    if (target != "high" && target != "low") {
      r.problems.push_back("centralized.threshold_sweep: must be 'high' or 'low'");
    }
    cfg.threshold_sweep_high = target == "high";
    r.read_size(c, "centralized", "eval_every", cfg.eval_every);
    if (c["trace_dir"]) {
      std::string dir;
      r.read(c, "centralized", "trace_dir", dir);
      cfg.trace_dir = dir;
    }
    if (const auto conv = c["convergence"]) {
      r.check_keys(conv, "centralized.convergence", {"enabled", "window", "tolerance", "holdout"});
      r.read(conv, "centralized.convergence", "enabled", cfg.convergence.enabled);
      r.read_size(conv, "centralized.convergence", "window", cfg.convergence.window);
      r.read(conv, "centralized.convergence", "tolerance", cfg.convergence.tolerance);
      r.read(conv, "centralized.convergence", "holdout", cfg.convergence.holdout_fraction);
      if (cfg.convergence.window < 1) r.problems.push_back("centralized.convergence.window: must be >= 1");
      if (!(cfg.convergence.holdout_fraction > 0.0 && cfg.convergence.holdout_fraction < 1.0)) {
        r.problems.push_back("centralized.convergence.holdout: must be in (0, 1)");
      }
    }
  }
  if (cfg.mode == Mode::centralized && cfg.gamma_high_db < cfg.gamma_low_db) {
    r.problems.push_back(fmt::format(
        "centralized.gamma_high_db: {} dB is below gamma_low_db {} dB; the more-important "
        "threshold must satisfy gamma_high >= gamma_low",
        cfg.gamma_high_db, cfg.gamma_low_db));
  }

  if (const auto d = root["distributed"]) {
    r.check_keys(d, "distributed", {"blocks", "split", "wds", "ratio"});
    r.read_size(d, "distributed", "blocks", cfg.dist_blocks);
    std::string split = "ratio";
    r.read(d, "distributed", "split", split);
    if (split == "ratio") {
      cfg.split_mode = SplitSpec::Mode::ratio;
    } else if (split == "random") {
      cfg.split_mode = SplitSpec::Mode::random;
    } else {
      r.problems.push_back("distributed.split: must be 'ratio' or 'random'");
    }
    r.read_size(d, "distributed", "wds", cfg.wds);
    r.read(d, "distributed", "ratio", cfg.ratio);
  }

  const auto allowed_schemes = schemes_for(cfg.mode);
  if (root["schemes"]) {
    r.read(root, "", "schemes", cfg.schemes);
    if (cfg.schemes.empty()) r.problems.push_back("schemes: must list at least one scheme");
    for (const auto& s : cfg.schemes) {
      if (std::find(allowed_schemes.begin(), allowed_schemes.end(), s) == allowed_schemes.end()) {
        r.problems.push_back(fmt::format("schemes: '{}' is not a {} scheme", s, mode));
      }
    }
  } else {
    cfg.schemes = allowed_schemes;
  }

  const auto sweep = root["sweep"];
  if (!sweep) {
    // A grid-search-only config may omit the sweep; `run` rejects it later.
    if (!root["gridsearch"]) {
      r.problems.push_back("sweep: missing required key (one of N, tx_snr_db, threshold_db, ratio, K)");
    }
  } else if (!sweep.IsMap()) {
    r.problems.push_back("sweep: expected a mapping of one axis to a list of values");
  } else {
    std::vector<std::string> axes;
    for (const auto& kv : sweep) axes.push_back(kv.first.as<std::string>());
    if (axes.size() != 1) {
      std::string names;
      for (const auto& a : axes) names += (names.empty() ? "" : ", ") + a;
      r.problems.push_back(fmt::format("sweep: exactly one axis is allowed, found {} ({})",
                                       axes.size(), names));
    } else {
      const auto& a = axes.front();
      const std::map<std::string, SweepAxis> by_name{{"N", SweepAxis::blocks},
                                                     {"tx_snr_db", SweepAxis::tx_snr_db},
                                                     {"threshold_db", SweepAxis::threshold_db},
                                                     {"ratio", SweepAxis::ratio},
                                                     {"K", SweepAxis::wds}};
      if (auto it = by_name.find(a); it == by_name.end()) {
        r.problems.push_back("sweep." + a + ": unknown sweep axis");
      } else {
        cfg.axis = it->second;
        r.read(sweep, "sweep", a.c_str(), cfg.values);
        if (cfg.values.empty()) r.problems.push_back("sweep." + a + ": needs at least one value");
      }
    }
  }

  if (const auto g = root["gridsearch"]) {
    r.check_keys(g, "gridsearch", {"grid_db"});
    r.read(g, "gridsearch", "grid_db", cfg.grid_db);
  }

  // Domain checks for the swept axis against its mode.
  const std::string axis_path = std::string("sweep.") + axis_name(cfg.axis);
  const bool central = cfg.mode == Mode::centralized;
  if (central && (cfg.axis == SweepAxis::ratio || cfg.axis == SweepAxis::wds)) {
    r.problems.push_back(axis_path + ": only valid in distributed mode");
  }
  if (!central && cfg.axis == SweepAxis::threshold_db) {
    r.problems.push_back(axis_path + ": only valid in centralized mode");
  }
  if (cfg.axis == SweepAxis::ratio) cfg.split_mode = SplitSpec::Mode::ratio;
  if (cfg.axis == SweepAxis::wds) cfg.split_mode = SplitSpec::Mode::random;

  auto is_count = [](double v) { return v >= 1.0 && v == std::floor(v) && v < 1e15; };
  for (double v : cfg.values) {
    switch (cfg.axis) {
      case SweepAxis::blocks:
      case SweepAxis::wds:
        if (!is_count(v)) r.problems.push_back(fmt::format("{}: {} is not an integer >= 1", axis_path, v));
        break;
      case SweepAxis::ratio:
        if (!(v > 0.0 && std::isfinite(v))) r.problems.push_back(fmt::format("{}: {} must be > 0", axis_path, v));
        break;
      case SweepAxis::tx_snr_db:
        if (!std::isfinite(v)) r.problems.push_back(fmt::format("{}: {} is not finite", axis_path, v));
        break;
      case SweepAxis::threshold_db:
        if (!std::isfinite(v)) {
          r.problems.push_back(fmt::format("{}: {} is not finite", axis_path, v));
        } else if (cfg.threshold_sweep_high && v < cfg.gamma_low_db) {
          r.problems.push_back(fmt::format(
              "{}: gamma_high = {} dB is below gamma_low_db = {} dB; requires gamma_high >= gamma_low",
              axis_path, v, cfg.gamma_low_db));
        } else if (!cfg.threshold_sweep_high && v > cfg.gamma_high_db) {
          r.problems.push_back(fmt::format(
              "{}: gamma_low = {} dB exceeds gamma_high_db = {} dB; requires gamma_high >= gamma_low",
              axis_path, v, cfg.gamma_high_db));
        }
        break;
    }
  }

  if (cfg.blocks() < 1) r.problems.push_back(central ? "centralized.blocks: must be >= 1" : "distributed.blocks: must be >= 1");
  if (!central) {
    if (cfg.wds < 1) r.problems.push_back("distributed.wds: must be >= 1");
    if (cfg.split_mode == SplitSpec::Mode::ratio && cfg.axis != SweepAxis::wds && cfg.wds != 2) {
      r.problems.push_back("distributed.wds: ratio splits use exactly 2 devices");
    }
    if (!(cfg.ratio > 0.0)) r.problems.push_back("distributed.ratio: must be > 0");
    if (std::find(cfg.schemes.begin(), cfg.schemes.end(), "equal_allocation") != cfg.schemes.end()) {
      std::vector<double> ns{static_cast<double>(cfg.dist_blocks)};
      std::vector<double> ks{static_cast<double>(cfg.split_mode == SplitSpec::Mode::ratio ? 2 : cfg.wds)};
      if (cfg.axis == SweepAxis::blocks) ns = cfg.values;
      if (cfg.axis == SweepAxis::wds) ks = cfg.values;
      for (double n : ns) {
        for (double k : ks) {
          if (n < k) {
            r.problems.push_back(fmt::format(
                "distributed.blocks: equal_allocation needs N >= K, got N = {} with K = {}", n, k));
          }
        }
      }
    }
  }

  if (!r.problems.empty()) throw ConfigError(std::move(r.problems));
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError({std::string("<yaml>: ") + e.what()});
  }
  return parse_config_node(root);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError({"<file>: " + path.string() + " does not exist"});
  }
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return parse_config_node(root);
}

}  // namespace edgesim
