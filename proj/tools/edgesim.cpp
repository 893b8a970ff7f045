// edgesim: experiment driver for importance-aware resource allocation.
//
//   edgesim run <config.yaml>         sweep -> detail / summary CSVs
//   edgesim gridsearch <config.yaml>  exhaustive (gamma_high, gamma_low) search
//   edgesim plan --sizes 1,2 --blocks 200
//
// Global overrides: --seed S (first trial seed), --out PATH, --threads T.
// EDGESIM_DATA_DIR replaces the configured IDX directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "edgesim/edgesim.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

edgesim::ExperimentConfig load(const std::string& path, const Overrides& ov) {
  auto cfg = edgesim::parse_config(path);
  if (ov.seed) {
    const auto n = cfg.seeds.size();
    cfg.seeds.clear();
    for (std::size_t j = 0; j < n; ++j) cfg.seeds.push_back(*ov.seed + j);
  }
  if (ov.out) cfg.output = *ov.out;
  if (ov.threads) cfg.threads = *ov.threads;
  return cfg;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

int cmd_run(const std::string& config, const Overrides& ov) {
  const auto cfg = load(config, ov);
  if (cfg.values.empty()) throw edgesim::ConfigError({"sweep: missing required key for `run`"});
  const auto corpus = edgesim::load_corpus(cfg.dataset);
  const auto table = edgesim::run_sweep(cfg, corpus);

  {
    auto os = open_out(cfg.output);
    edgesim::write_detail_csv(os, table);
  }
  const auto summary_path = edgesim::with_suffix(cfg.output, ".summary.csv");
  {
    auto os = open_out(summary_path);
    edgesim::write_summary_csv(os, table);
  }
  if (cfg.mode == edgesim::Mode::distributed) {
    auto os = open_out(edgesim::with_suffix(cfg.output, ".runs.csv"));
    edgesim::write_distributed_runs_csv(os, cfg, table);
  }

  std::size_t failures = 0;
  for (const auto& r : table.rows) {
    if (!r.error.empty()) {
      ++failures;
      std::cerr << fmt::format("trial {}={} {} seed {} failed: {}\n", table.param, r.value,
                               r.scheme, r.seed, r.error);
    }
  }
  for (const auto& s : table.summary) {
    std::cout << fmt::format("{}={:<8} {:<18} mean {:.4f}  sd {:.4f}  (n={})\n", table.param,
                             s.value, s.scheme, s.mean, s.stddev, s.trials);
  }
  std::cout << "wrote " << cfg.output.string() << " and " << summary_path.string() << '\n';
  if (failures) std::cerr << failures << " trial(s) failed\n";
  return 0;
}

int cmd_gridsearch(const std::string& config, const Overrides& ov, std::vector<double> grid) {
  const auto cfg = load(config, ov);
  if (grid.empty()) grid = cfg.grid_db;
  if (grid.empty()) throw edgesim::ConfigError({"gridsearch.grid_db: no grid given"});
  const auto corpus = edgesim::load_corpus(cfg.dataset);
  const auto result = edgesim::grid_search_thresholds(cfg, corpus, grid);

  auto os = open_out(cfg.output);
  edgesim::write_grid_csv(os, result);
  std::cout << fmt::format("best proposed: gamma_high {} dB, gamma_low {} dB -> {:.4f}\n",
                           result.best.gamma_high_db, result.best.gamma_low_db,
                           result.best.stats.mean);
  std::cout << fmt::format("best equal-importance: gamma {} dB -> {:.4f}\n",
                           result.best_baseline.gamma_high_db, result.best_baseline.stats.mean);
  std::cout << "wrote " << cfg.output.string() << '\n';
  return 0;
}

int cmd_plan(const std::vector<std::size_t>& sizes, std::size_t blocks, const std::string& scheme) {
  const auto plan = edgesim::plan_for(edgesim::parse_distributed_scheme(scheme), sizes, blocks);
  edgesim::write_plan_csv(std::cout, sizes, plan);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo simulator for data-importance aware radio resource allocation"};
  app.require_subcommand(1);

  Overrides ov;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t threads = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed of the first trial (later trials use seed+j)");
  auto* out_opt = app.add_option("--out", out, "Output CSV path");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string config;
  auto* run = app.add_subcommand("run", "Run the sweep described by a config file");
  run->add_option("config", config, "YAML experiment config")->required();
  run->fallthrough();

  std::vector<double> grid;
  auto* gs = app.add_subcommand("gridsearch", "Exhaustive SNR threshold search (centralized)");
  gs->add_option("config", config, "YAML experiment config")->required();
  gs->add_option("--grid", grid, "Threshold grid in dB (overrides gridsearch.grid_db)")->delimiter(',');
  gs->fallthrough();

  std::vector<std::size_t> sizes;
  std::size_t blocks = 0;
  std::string scheme = "proposed";
  auto* plan = app.add_subcommand("plan", "Print the block allocation k,D_k,N_k");
  plan->add_option("--sizes", sizes, "Dataset sizes D_k")->required()->delimiter(',');
  plan->add_option("--blocks", blocks, "Total blocks N")->required();
  plan->add_option("--scheme", scheme, "proposed | equal_allocation | largest_only");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) ov.seed = seed;
  if (*out_opt) ov.out = out;
  if (*threads_opt) ov.threads = threads;

  try {
    if (*run) return cmd_run(config, ov);
    if (*gs) return cmd_gridsearch(config, ov, grid);
    if (*plan) return cmd_plan(sizes, blocks, scheme);
  } catch (const edgesim::ConfigError& e) {
    std::cerr << "edgesim: " << e.what() << '\n';
    return 2;
  } catch (const edgesim::FormatError& e) {
    std::cerr << "edgesim: dataset error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "edgesim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
