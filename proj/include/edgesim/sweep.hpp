#pragma once

// Sweep engine: runs every (sweep value, scheme, seed) trial of an experiment,
// optionally on several worker threads, and assembles the results in a fixed
// order so the output does not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "edgesim/centralized.hpp"
#include "edgesim/config.hpp"
#include "edgesim/dataset.hpp"
#include "edgesim/distributed.hpp"

namespace edgesim {

struct Corpus {
  Dataset train;
  Dataset test;
};

inline constexpr const char* kDataDirEnv = "EDGESIM_DATA_DIR";

/// Loads (or synthesizes) the train/test pair. EDGESIM_DATA_DIR, when set,
/// replaces the configured IDX directory.
inline Corpus load_corpus(const DatasetSource& src) {
  Corpus c;
  if (src.kind == DatasetSource::Kind::blobs) {
    Rng rng = make_stream(src.subset_seed, Stream::data);
    Dataset all = synth_blobs(src.classes, src.dims, src.train_per_class + src.test_per_class,
                              src.separation, rng);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const std::size_t within = i % (src.train_per_class + src.test_per_class);
      (within < src.train_per_class ? train_idx : test_idx).push_back(i);
    }
    c.train = select_rows(all, train_idx);
    c.test = select_rows(all, test_idx);
    return c;
  }

  std::filesystem::path dir = src.dir;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) dir = env;
  Dataset train = load_idx(dir / src.train_images, dir / src.train_labels);
  Dataset test = load_idx(dir / src.test_images, dir / src.test_labels);
  Rng rng = make_stream(src.subset_seed, Stream::subset);
  c.train = src.train_size > 0 && src.train_size < train.size()
                ? stratified_subset(train, src.train_size, rng)
                : std::move(train);
  c.test = src.test_size > 0 && src.test_size < test.size()
               ? stratified_subset(test, src.test_size, rng)
               : std::move(test);
  return c;
}

/// Calls body(i) for i in [0, count) on up to `threads` workers (0 means one
/// per hardware thread).
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
}

struct TrialResult {
  double value = 0.0;
  std::string scheme;
  std::uint64_t seed = 0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t blocks_spent = 0;
  double wall_ms = 0.0;
  std::string error;  ///< empty on success
};

struct SummaryRow {
  double value = 0.0;
  std::string scheme;
  std::size_t trials = 0;  ///< successful trials
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();  ///< sample (n-1); 0 for one trial
};

struct SweepTable {
  std::string param;
  std::vector<TrialResult> rows;
  std::vector<SummaryRow> summary;
};

inline CentralizedOptions centralized_options(const ExperimentConfig& cfg, double value,
                                              const std::string& scheme) {
  double tx_db = cfg.tx_snr_db;
  double high = cfg.gamma_high_db, low = cfg.gamma_low_db, single = cfg.gamma_db;
  std::size_t blocks = cfg.central_blocks;
  switch (cfg.axis) {
    case SweepAxis::blocks: blocks = static_cast<std::size_t>(value); break;
    case SweepAxis::tx_snr_db: tx_db = value; break;
    case SweepAxis::threshold_db:
      single = value;
      (cfg.threshold_sweep_high ? high : low) = value;
      break;
    default: break;
  }
  CentralizedOptions opt;
  opt.policy = scheme == "proposed" ? ThresholdPolicy::from_db(high, low)
                                    : ThresholdPolicy::uniform(db_to_linear(single));
  opt.tx_snr = TxSnr::from_db(tx_db);
  opt.blocks = blocks;
  opt.train = cfg.learner;
  opt.eval_every = cfg.eval_every;
  opt.convergence = cfg.convergence;
  return opt;
}

inline DistributedScheme parse_distributed_scheme(const std::string& s) {
  if (s == "proposed") return DistributedScheme::proposed;
  if (s == "equal_allocation") return DistributedScheme::equal_allocation;
  if (s == "largest_only") return DistributedScheme::largest_only;
  throw std::invalid_argument("unknown distributed scheme '" + s + "'");
}

inline DistributedOptions distributed_options(const ExperimentConfig& cfg, double value,
                                              const std::string& scheme) {
  DistributedOptions opt;
  double tx_db = cfg.tx_snr_db;
  std::size_t wds = cfg.wds;
  double ratio = cfg.ratio;
  opt.blocks = cfg.dist_blocks;
  switch (cfg.axis) {
    case SweepAxis::blocks: opt.blocks = static_cast<std::size_t>(value); break;
    case SweepAxis::tx_snr_db: tx_db = value; break;
    case SweepAxis::ratio: ratio = value; break;
    case SweepAxis::wds: wds = static_cast<std::size_t>(value); break;
    default: break;
  }
  opt.split = cfg.split_mode == SplitSpec::Mode::ratio ? SplitSpec::by_ratio(ratio)
                                                       : SplitSpec::random(wds);
  opt.tx_snr = TxSnr::from_db(tx_db);
  opt.scheme = parse_distributed_scheme(scheme);
  opt.train = TrainConfig{cfg.learner.lambda, cfg.local_epochs, cfg.local_tail_average};
  return opt;
}

inline std::string trace_file_name(double value, const std::string& scheme, std::uint64_t seed) {
  return fmt::format("trace_{}_{}_{}.csv", value, scheme, seed);
}

inline TrialResult run_trial(const ExperimentConfig& cfg, const Corpus& corpus, double value,
                             const std::string& scheme, std::uint64_t seed) {
  TrialResult res{value, scheme, seed, std::numeric_limits<double>::quiet_NaN(), 0, 0.0, {}};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (cfg.mode == Mode::centralized) {
      const auto trace = run_centralized(corpus.train, corpus.test,
                                         centralized_options(cfg, value, scheme), seed);
      res.accuracy = trace.final_accuracy;
      res.blocks_spent = trace.blocks_spent;
      if (cfg.trace_dir) {
        std::filesystem::create_directories(*cfg.trace_dir);
        std::ofstream os(*cfg.trace_dir / trace_file_name(value, scheme, seed));
        write_trace_csv(os, trace);
      }
    } else {
      const auto trace = run_distributed(corpus.train, corpus.test,
                                         distributed_options(cfg, value, scheme), seed);
      res.accuracy = trace.accuracy;
      res.blocks_spent = trace.blocks_spent;
    }
  } catch (const std::exception& e) {
    res.accuracy = std::numeric_limits<double>::quiet_NaN();
    res.error = e.what();
  }
  if (cfg.record_timing) {
    res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return res;
}

inline SummaryRow summarize(double value, const std::string& scheme,
                            const std::vector<double>& accuracies) {
  SummaryRow s{value, scheme, accuracies.size()};
  if (accuracies.empty()) return s;
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  s.mean = sum / static_cast<double>(accuracies.size());
  double ss = 0.0;
  for (double a : accuracies) ss += (a - s.mean) * (a - s.mean);
  s.stddev = accuracies.size() > 1 ? std::sqrt(ss / static_cast<double>(accuracies.size() - 1)) : 0.0;
  return s;
}

/// Trial `run(value, scheme, seed)` for every combination, ordered by value,
/// then scheme, then seed.
inline SweepTable run_sweep(const ExperimentConfig& cfg, const Corpus& corpus) {
  SweepTable table;
  table.param = axis_name(cfg.axis);
  for (double v : cfg.values) {
    for (const auto& s : cfg.schemes) {
      for (auto seed : cfg.seeds) table.rows.push_back({v, s, seed, 0.0, 0, 0.0, {}});
    }
  }
  parallel_for(table.rows.size(), cfg.threads, [&](std::size_t i) {
    const auto& r = table.rows[i];
    table.rows[i] = run_trial(cfg, corpus, r.value, r.scheme, r.seed);
  });

  const std::size_t per_group = cfg.seeds.size();
  for (std::size_t g = 0; g * per_group < table.rows.size(); ++g) {
    std::vector<double> acc;
    for (std::size_t j = 0; j < per_group; ++j) {
      const auto& r = table.rows[g * per_group + j];
      if (r.error.empty()) acc.push_back(r.accuracy);
    }
    const auto& head = table.rows[g * per_group];
    table.summary.push_back(summarize(head.value, head.scheme, acc));
  }
  return table;
}

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

/// Columns: sweep_param,sweep_value,scheme,seed,accuracy,blocks_spent,wall_ms.
/// Failed trials carry accuracy "nan".
inline void write_detail_csv(std::ostream& os, const SweepTable& t) {
  os << "sweep_param,sweep_value,scheme,seed,accuracy,blocks_spent,wall_ms\n";
  for (const auto& r : t.rows) {
    os << t.param << ',' << fmt_num(r.value) << ',' << r.scheme << ',' << r.seed << ','
       << fmt_num(r.accuracy) << ',' << r.blocks_spent << ',' << fmt_num(r.wall_ms) << '\n';
  }
}

/// Columns: sweep_param,sweep_value,scheme,trials,mean_accuracy,std_accuracy.
inline void write_summary_csv(std::ostream& os, const SweepTable& t) {
  os << "sweep_param,sweep_value,scheme,trials,mean_accuracy,std_accuracy\n";
  for (const auto& s : t.summary) {
    os << t.param << ',' << fmt_num(s.value) << ',' << s.scheme << ',' << s.trials << ','
       << fmt_num(s.mean) << ',' << fmt_num(s.stddev) << '\n';
  }
}

/// Distributed per-run rows: scheme,K,ratio,N,tx_snr_db,seed,accuracy. The
/// ratio column is empty for random splits.
inline void write_distributed_runs_csv(std::ostream& os, const ExperimentConfig& cfg,
                                       const SweepTable& t) {
  os << "scheme,K,ratio,N,tx_snr_db,seed,accuracy\n";
  for (const auto& r : t.rows) {
    const auto opt = distributed_options(cfg, r.value, r.scheme);
    os << r.scheme << ',' << opt.split.wds << ',';
    if (opt.split.mode == SplitSpec::Mode::ratio) os << fmt_num(opt.split.ratio);
    os << ',' << opt.blocks << ',' << fmt_num(cfg.axis == SweepAxis::tx_snr_db ? r.value : cfg.tx_snr_db)
       << ',' << r.seed << ',' << fmt_num(r.accuracy) << '\n';
  }
}

inline std::filesystem::path with_suffix(const std::filesystem::path& out, const std::string& suffix) {
  auto p = out;
  const auto stem = p.stem().string();
  return p.replace_filename(stem + suffix);
}

struct GridEntry {
  double gamma_high_db = 0.0;
  double gamma_low_db = 0.0;
  SummaryRow stats;
};

struct GridSearchResult {
  std::vector<GridEntry> table;  ///< every (high, low) with high >= low
  GridEntry best;                ///< proposed scheme's best pair
  GridEntry best_baseline;       ///< best diagonal entry (the equal-importance search)
};

/// Exhaustive search over (gamma_high, gamma_low) in grid^2 with
/// gamma_high >= gamma_low, each pair averaged over cfg.seeds. Ties go to the
/// lexicographically smallest (gamma_high, gamma_low).
inline GridSearchResult grid_search_thresholds(const ExperimentConfig& cfg, const Corpus& corpus,
                                               std::vector<double> grid_db) {
  if (grid_db.empty()) throw std::invalid_argument("grid_search_thresholds: empty grid");
  if (cfg.mode != Mode::centralized) {
    throw std::invalid_argument("grid_search_thresholds: centralized mode only");
  }
  // The search runs at the base settings; the sweep axis is not applied.
  ExperimentConfig base = cfg;
  base.axis = SweepAxis::threshold_db;
  std::sort(grid_db.begin(), grid_db.end());
  grid_db.erase(std::unique(grid_db.begin(), grid_db.end()), grid_db.end());

  GridSearchResult out;
  for (double hi : grid_db) {
    for (double lo : grid_db) {
      if (hi >= lo) out.table.push_back({hi, lo, {}});
    }
  }

  const std::size_t per = cfg.seeds.size();
  std::vector<double> acc(out.table.size() * per, std::numeric_limits<double>::quiet_NaN());
  parallel_for(acc.size(), cfg.threads, [&](std::size_t i) {
    const auto& e = out.table[i / per];
    CentralizedOptions opt = centralized_options(base, 0.0, "proposed");
    opt.policy = ThresholdPolicy::from_db(e.gamma_high_db, e.gamma_low_db);
    try {
      acc[i] = run_centralized(corpus.train, corpus.test, opt, cfg.seeds[i % per]).final_accuracy;
    } catch (const std::exception&) {
    }
  });

  bool have_best = false, have_base = false;
  for (std::size_t k = 0; k < out.table.size(); ++k) {
    std::vector<double> ok;
    for (std::size_t j = 0; j < per; ++j) {
      if (!std::isnan(acc[k * per + j])) ok.push_back(acc[k * per + j]);
    }
    auto& e = out.table[k];
    e.stats = summarize(0.0, "proposed", ok);
    if (ok.empty()) continue;
    // Entries are visited in lexicographic order, so strict > keeps the smallest pair on ties.
    if (!have_best || e.stats.mean > out.best.stats.mean) {
      out.best = e;
      have_best = true;
    }
    if (e.gamma_high_db == e.gamma_low_db && (!have_base || e.stats.mean > out.best_baseline.stats.mean)) {
      out.best_baseline = e;
      have_base = true;
    }
  }
  if (!have_best) throw std::runtime_error("grid_search_thresholds: every trial failed");
  return out;
}

/// Columns: gamma_high_db,gamma_low_db,trials,mean_accuracy,std_accuracy.
inline void write_grid_csv(std::ostream& os, const GridSearchResult& r) {
  os << "gamma_high_db,gamma_low_db,trials,mean_accuracy,std_accuracy\n";
  for (const auto& e : r.table) {
    os << fmt_num(e.gamma_high_db) << ',' << fmt_num(e.gamma_low_db) << ',' << e.stats.trials
       << ',' << fmt_num(e.stats.mean) << ',' << fmt_num(e.stats.stddev) << '\n';
  }
}

}  // namespace edgesim
