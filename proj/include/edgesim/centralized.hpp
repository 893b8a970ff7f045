#pragma once

// Centralized edge learning: samples are streamed to the access point one at
// a time. Each sample is judged against the current model, retransmitted with
// MRC until its importance-dependent SNR threshold is met, and then used to
// update the model. Runs end when the block budget is spent.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "edgesim/channel.hpp"
#include "edgesim/data.hpp"
#include "edgesim/learner.hpp"
#include "edgesim/rng.hpp"

namespace edgesim {

/// Required combined SNR (linear) for more / less important samples.
struct ThresholdPolicy {
  double gamma_high = 1.0;
  double gamma_low = 1.0;

  ThresholdPolicy(double high, double low) : gamma_high(high), gamma_low(low) {
    if (!(high > 0.0) || !(low > 0.0)) {
      throw std::invalid_argument("ThresholdPolicy: thresholds must be > 0");
    }
    if (high < low) {
      throw std::invalid_argument(
          "ThresholdPolicy: the more-important threshold must not be below the less-important one");
    }
  }

  static ThresholdPolicy from_db(double high_db, double low_db) {
    return {db_to_linear(high_db), db_to_linear(low_db)};
  }

  static ThresholdPolicy uniform(double gamma) { return {gamma, gamma}; }
};

inline double threshold_for(Importance imp, const ThresholdPolicy& policy) {
  return imp == Importance::more ? policy.gamma_high : policy.gamma_low;
}

class BudgetExhausted : public std::runtime_error {
 public:
  BudgetExhausted() : std::runtime_error("resource block budget exhausted") {}
};

class BlockBudget {
 public:
  explicit BlockBudget(std::size_t total) : total_(total) {}

  std::size_t total() const { return total_; }
  std::size_t spent() const { return spent_; }
  std::size_t remaining() const { return total_ - spent_; }
  bool exhausted() const { return spent_ == total_; }

  void spend() {
    if (exhausted()) throw BudgetExhausted();
    ++spent_;
  }

 private:
  std::size_t total_;
  std::size_t spent_ = 0;
};

/// Draws further blocks into `draws` until their MRC sum reaches `threshold`
/// or the budget runs out. An empty `draws` always receives at least one block.
inline void extend_until_threshold(std::vector<ChannelDraw>& draws, double threshold,
                                   BlockBudget& budget, Channel& channel) {
  if (draws.empty()) {
    budget.spend();
    draws.push_back(channel.draw());
  }
  double combined = mrc_combine(draws);
  while (combined < threshold && !budget.exhausted()) {
    budget.spend();
    draws.push_back(channel.draw());
    combined += draws.back().received_snr;
  }
}

/// ARQ with MRC for one payload; noise is applied once at the final SNR.
inline CombinedSignal transmit_until_threshold(const Sample& sample, double threshold,
                                               BlockBudget& budget, Channel& channel) {
  if (budget.exhausted()) throw BudgetExhausted();
  std::vector<ChannelDraw> draws;
  extend_until_threshold(draws, threshold, budget, channel);
  return channel.corrupt(sample.data, draws);
}

struct TraceRow {
  std::size_t index = 0;  ///< 1-based update counter
  Importance importance = Importance::less;
  std::size_t blocks = 0;
  std::size_t spent_total = 0;
  double combined_snr = 0.0;  ///< linear
  std::optional<double> accuracy;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  double final_accuracy = 0.0;
  std::size_t blocks_spent = 0;
  bool converged = false;
};

/// Accuracy-plateau stopping rule on a validation holdout. Off by default.
struct ConvergenceRule {
  bool enabled = false;
  std::size_t window = 50;
  double tolerance = 1e-3;
  double holdout_fraction = 0.1;
};

struct CentralizedOptions {
  ThresholdPolicy policy = ThresholdPolicy::uniform(1.0);
  TxSnr tx_snr = TxSnr(1.0);
  std::size_t blocks = 1;
  TrainConfig train;
  /// Test accuracy is recorded every `eval_every` updates; 0 records only the
  /// final accuracy.
  std::size_t eval_every = 1;
  ConvergenceRule convergence;
};

/// Sample presentation order used by run_centralized for `seed`.
inline std::vector<std::size_t> centralized_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_stream(seed, Stream::shuffle);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

inline RunTrace run_centralized(const Dataset& train, const Dataset& test,
                                const CentralizedOptions& opt, std::uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("run_centralized: empty training set");
  if (opt.blocks < 1) throw std::invalid_argument("run_centralized: N must be >= 1");
  opt.train.validate();

  Channel channel(opt.tx_snr, seed);
  Rng sgd = make_stream(seed, Stream::sgd);
  const auto order = centralized_order(train.size(), seed);

  std::size_t stream_begin = 0;
  Dataset validation;
  if (opt.convergence.enabled) {
    const auto holdout = static_cast<std::size_t>(
        std::ceil(opt.convergence.holdout_fraction * static_cast<double>(train.size())));
    if (holdout < 1 || holdout >= train.size()) {
      throw std::invalid_argument("run_centralized: holdout leaves no training or validation data");
    }
    validation = select_rows(train, {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout)});
    stream_begin = holdout;
  }

  LinearModel model(train.num_classes, train.dims());
  BlockBudget budget(opt.blocks);
  std::vector<Sample> buffer;
  std::deque<double> recent_validation;
  RunTrace trace;

  for (std::size_t pos = stream_begin; pos < order.size() && !budget.exhausted(); ++pos) {
    const Sample sample = train.sample(order[pos]);

    std::vector<ChannelDraw> draws;
    budget.spend();
    draws.push_back(channel.draw());
    CombinedSignal received = channel.corrupt(sample.data, draws);

    const Importance imp = judge(model, received.payload_estimate, sample.label);
    extend_until_threshold(draws, threshold_for(imp, opt.policy), budget, channel);
    if (draws.size() > 1) received = channel.corrupt(sample.data, draws);

    buffer.push_back({std::move(received.payload_estimate), sample.label});
    model = update(model, buffer, opt.train, sgd);

    TraceRow row;
    row.index = buffer.size();
    row.importance = imp;
    row.blocks = draws.size();
    row.spent_total = budget.spent();
    row.combined_snr = received.combined_snr;
    if (opt.eval_every > 0 && row.index % opt.eval_every == 0) row.accuracy = evaluate(model, test);
    trace.rows.push_back(row);

    if (opt.convergence.enabled) {
      recent_validation.push_back(evaluate(model, validation));
      if (recent_validation.size() > opt.convergence.window) recent_validation.pop_front();
      if (recent_validation.size() == opt.convergence.window) {
        const auto [lo, hi] = std::minmax_element(recent_validation.begin(), recent_validation.end());
        if (*hi - *lo < opt.convergence.tolerance) {
          trace.converged = true;
          break;
        }
      }
    }
  }

  trace.blocks_spent = budget.spent();
  trace.final_accuracy = evaluate(model, test);
  return trace;
}

inline std::string format_snr_db(double linear) {
  if (std::isinf(linear)) return "inf";
  if (linear <= 0.0) return "-inf";
  return fmt::format("{}", linear_to_db(linear));
}

/// CSV columns: i,importance,blocks,spent_total,combined_snr_db,accuracy.
/// Rows without a recorded accuracy leave the last field empty.
inline void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  os << "i,importance,blocks,spent_total,combined_snr_db,accuracy\n";
  for (const auto& r : trace.rows) {
    os << r.index << ',' << to_string(r.importance) << ',' << r.blocks << ',' << r.spent_total
       << ',' << format_snr_db(r.combined_snr) << ',';
    if (r.accuracy) os << fmt::format("{}", *r.accuracy);
    os << '\n';
  }
}

inline std::string trace_csv(const RunTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

}  // namespace edgesim
