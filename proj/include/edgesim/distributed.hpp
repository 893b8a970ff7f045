#pragma once

// Distributed edge learning: every device trains a local model once, uploads
// N_k independent noisy copies of it, and the access point aggregates them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "edgesim/channel.hpp"
#include "edgesim/data.hpp"
#include "edgesim/dataset.hpp"
#include "edgesim/learner.hpp"
#include "edgesim/rng.hpp"

namespace edgesim {

struct AllocationPlan {
  std::vector<std::size_t> blocks;  ///< N_k per device
  std::size_t total = 0;            ///< budget N

  std::size_t used() const { return std::accumulate(blocks.begin(), blocks.end(), std::size_t{0}); }
};

/// N_k = floor(D_k * N / sum(D)), evaluated in exact integer arithmetic.
inline AllocationPlan allocate_blocks(std::span<const std::size_t> sizes, std::size_t total) {
  if (total < 1) throw std::invalid_argument("allocate_blocks: N must be >= 1");
  unsigned __int128 sum = 0;
  for (auto d : sizes) sum += d;
  if (sum == 0) throw std::invalid_argument("allocate_blocks: total dataset size is zero");

  AllocationPlan plan{{}, total};
  plan.blocks.reserve(sizes.size());
  for (auto d : sizes) {
    plan.blocks.push_back(static_cast<std::size_t>(
        static_cast<unsigned __int128>(d) * total / sum));
  }
  return plan;
}

inline AllocationPlan allocate_equal(std::size_t devices, std::size_t total) {
  if (devices < 1) throw std::invalid_argument("allocate_equal: no devices");
  if (total < devices) {
    throw std::invalid_argument(
        fmt::format("allocate_equal: N = {} is below the device count {}", total, devices));
  }
  return {std::vector<std::size_t>(devices, total / devices), total};
}

/// All N blocks to the largest dataset; ties go to the lowest index.
inline AllocationPlan allocate_largest_only(std::span<const std::size_t> sizes, std::size_t total) {
  if (sizes.empty()) throw std::invalid_argument("allocate_largest_only: no devices");
  if (total < 1) throw std::invalid_argument("allocate_largest_only: N must be >= 1");
  const auto largest = static_cast<std::size_t>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  AllocationPlan plan{std::vector<std::size_t>(sizes.size(), 0), total};
  plan.blocks[largest] = total;
  return plan;
}

/// Full SGD training on clean local data, starting from the zero model. An
/// empty local dataset yields the zero model.
inline LinearModel local_train(const Dataset& local, std::size_t classes, std::size_t dims,
                               const TrainConfig& cfg, Rng& rng) {
  LinearModel model(classes, dims);
  if (local.empty()) return model;
  return update(model, local, cfg, rng);
}

/// Noisy received copies of one local model, one resource block each. The
/// flattened weights are sent at unit mean power; the scale travels as
/// noiseless side information and is undone at the receiver.
inline std::vector<LinearModel> transmit_model(const LinearModel& model, std::size_t copies,
                                               Channel& channel) {
  std::vector<LinearModel> out;
  out.reserve(copies);
  if (copies == 0) return out;

  const Eigen::VectorXd flat = model.flatten();
  const double rms = std::sqrt(flat.squaredNorm() / static_cast<double>(flat.size()));
  const double scale = rms > 0.0 ? rms : 1.0;
  const Eigen::VectorXd unit_power = flat / scale;

  for (std::size_t n = 0; n < copies; ++n) {
    const ChannelDraw draw = channel.draw();
    const CombinedSignal rx = channel.corrupt(unit_power, std::span(&draw, 1));
    const Eigen::VectorXd restored = rms > 0.0 ? Eigen::VectorXd(rx.payload_estimate * scale)
                                               : Eigen::VectorXd(Eigen::VectorXd::Zero(flat.size()));
    out.push_back(LinearModel::unflatten(restored, model.classes(), model.dims()));
  }
  return out;
}

/// Coefficientwise mean (1/K) sum_k w_k.
inline LinearModel aggregate_equal(std::span<const LinearModel> models) {
  if (models.empty()) throw std::invalid_argument("aggregate_equal: no models");
  WeightMatrix sum = models.front().weights();
  for (std::size_t k = 1; k < models.size(); ++k) {
    if (models[k].weights().rows() != sum.rows() || models[k].weights().cols() != sum.cols()) {
      throw std::invalid_argument("aggregate_equal: model dimensions differ");
    }
    sum += models[k].weights();
  }
  return LinearModel(WeightMatrix(sum / static_cast<double>(models.size())));
}

/// Received copies per device: copies[k][n] is the n-th copy of w_k.
using ModelCopies = std::vector<std::vector<LinearModel>>;

class DegenerateAllocation : public std::invalid_argument {
 public:
  DegenerateAllocation()
      : std::invalid_argument("aggregate_importance: no device received any block") {}
};

/// (1/N) * sum_k sum_n w_k(n). The divisor is the budget N, not the number of
/// copies actually received.
inline LinearModel aggregate_importance(const ModelCopies& copies, std::size_t total) {
  if (total < 1) throw std::invalid_argument("aggregate_importance: N must be >= 1");
  std::size_t count = 0;
  const LinearModel* first = nullptr;
  for (const auto& per_device : copies) {
    count += per_device.size();
    if (!first && !per_device.empty()) first = &per_device.front();
  }
  if (count == 0) throw DegenerateAllocation();
  if (count > total) {
    throw std::invalid_argument("aggregate_importance: more copies than the budget N");
  }

  WeightMatrix sum = WeightMatrix::Zero(first->weights().rows(), first->weights().cols());
  for (const auto& per_device : copies) {
    for (const auto& m : per_device) {
      if (m.weights().rows() != sum.rows() || m.weights().cols() != sum.cols()) {
        throw std::invalid_argument("aggregate_importance: model dimensions differ");
      }
      sum += m.weights();
    }
  }
  return LinearModel(WeightMatrix(sum / static_cast<double>(total)));
}

enum class DistributedScheme { proposed, equal_allocation, largest_only };

inline std::string_view to_string(DistributedScheme s) {
  switch (s) {
    case DistributedScheme::proposed: return "proposed";
    case DistributedScheme::equal_allocation: return "equal_allocation";
    case DistributedScheme::largest_only: return "largest_only";
  }
  return "?";
}

struct DistributedOptions {
  SplitSpec split;
  std::size_t blocks = 200;
  TxSnr tx_snr = TxSnr(100.0);
  DistributedScheme scheme = DistributedScheme::proposed;
  TrainConfig train{1e-4, 10, true};
};

struct DistributedTrace {
  std::vector<std::size_t> sizes;  ///< D_k
  AllocationPlan plan;
  std::vector<bool> degenerate;    ///< device had no local data
  std::size_t blocks_spent = 0;
  double accuracy = 0.0;
};

inline AllocationPlan plan_for(DistributedScheme scheme, std::span<const std::size_t> sizes,
                               std::size_t total) {
  switch (scheme) {
    case DistributedScheme::proposed: return allocate_blocks(sizes, total);
    case DistributedScheme::equal_allocation: return allocate_equal(sizes.size(), total);
    case DistributedScheme::largest_only: return allocate_largest_only(sizes, total);
  }
  throw std::invalid_argument("unknown distributed scheme");
}

inline DistributedTrace run_distributed(const Dataset& train, const Dataset& test,
                                        const DistributedOptions& opt, std::uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("run_distributed: empty training set");

  Rng split_rng = make_stream(seed, Stream::split);
  const auto parts = split(train, opt.split, split_rng);

  DistributedTrace trace;
  std::vector<LinearModel> locals;
  Rng sgd = make_stream(seed, Stream::sgd);
  for (const auto& part : parts) {
    trace.sizes.push_back(part.size());
    trace.degenerate.push_back(part.empty());
    locals.push_back(local_train(part, train.num_classes, train.dims(), opt.train, sgd));
  }

  trace.plan = plan_for(opt.scheme, trace.sizes, opt.blocks);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (trace.degenerate[k]) trace.plan.blocks[k] = 0;
  }

  Channel channel(opt.tx_snr, seed);
  ModelCopies copies;
  for (std::size_t k = 0; k < locals.size(); ++k) {
    copies.push_back(transmit_model(locals[k], trace.plan.blocks[k], channel));
  }
  trace.blocks_spent = trace.plan.used();
  trace.accuracy = evaluate(aggregate_importance(copies, opt.blocks), test);
  return trace;
}

/// Plan dump columns: k,D_k,N_k (k is 1-based).
inline void write_plan_csv(std::ostream& os, std::span<const std::size_t> sizes,
                           const AllocationPlan& plan) {
  os << "k,D_k,N_k\n";
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    os << (k + 1) << ',' << sizes[k] << ',' << plan.blocks[k] << '\n';
  }
}

}  // namespace edgesim
