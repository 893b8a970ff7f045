#pragma once

// Block-fading data channel abstracted to received SNR: Rayleigh power gains,
// MRC combining across retransmissions, and the equivalent additive noise a
// real-valued payload sees at a given combined SNR.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgesim/rng.hpp"

namespace edgesim {

/// Reference signal power of a normalized payload component.
inline constexpr double kSignalPower = 1.0;

inline double db_to_linear(double db) {
  if (!std::isfinite(db)) {
    throw std::invalid_argument("db_to_linear: non-finite decibel value");
  }
  return std::pow(10.0, db / 10.0);
}

inline double linear_to_db(double linear) {
  if (!(linear > 0.0)) {
    throw std::invalid_argument("linear_to_db: ratio must be positive");
  }
  return 10.0 * std::log10(linear);
}

/// Per-block transmit SNR before fading. May be +inf to model a noiseless link.
class TxSnr {
 public:
  explicit TxSnr(double linear) : linear_(linear) {
    if (!(linear > 0.0)) {
      throw std::invalid_argument("TxSnr: linear value must be > 0, got " +
                                  std::to_string(linear));
    }
  }

  static TxSnr from_db(double db) { return TxSnr(db_to_linear(db)); }

  double linear() const { return linear_; }
  double db() const { return linear_to_db(linear_); }

 private:
  double linear_;
};

/// One resource block: fading power |h|^2 and the SNR it yields.
struct ChannelDraw {
  double gain_power = 0.0;
  double received_snr = 0.0;
};

/// Payload as reconstructed at the access point after MRC.
struct CombinedSignal {
  Eigen::VectorXd payload_estimate;
  double combined_snr = 0.0;
  std::size_t blocks_used = 0;
};

inline ChannelDraw draw_block(Rng& rng, TxSnr tx) {
  std::exponential_distribution<double> rayleigh_power(1.0);
  const double gain = rayleigh_power(rng);
  // 0 * inf is NaN; a noiseless link stays noiseless on any nonzero gain.
  const double received =
      std::isinf(tx.linear()) ? (gain > 0.0 ? tx.linear() : 0.0) : gain * tx.linear();
  return {gain, received};
}

/// MRC output SNR is the sum of the branch SNRs.
inline double mrc_combine(std::span<const ChannelDraw> draws) {
  if (draws.empty()) {
    throw std::invalid_argument("mrc_combine: no branches to combine");
  }
  double total = 0.0;
  for (const auto& d : draws) {
    if (!(d.received_snr >= 0.0)) {
      throw std::invalid_argument("mrc_combine: negative branch SNR");
    }
    total += d.received_snr;
  }
  return total;
}

/// Adds i.i.d. N(0, kSignalPower / snr) noise to every component. Always
/// consumes one normal deviate per component, including when snr is infinite.
inline Eigen::VectorXd add_equivalent_noise(const Eigen::VectorXd& payload, double snr,
                                            Rng& rng) {
  if (!(snr > 0.0)) {
    throw std::invalid_argument("corrupt_payload: combined SNR must be > 0");
  }
  const double sigma = std::sqrt(kSignalPower / snr);
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd out(payload.size());
  for (Eigen::Index j = 0; j < payload.size(); ++j) {
    out[j] = payload[j] + sigma * unit(rng);
  }
  return out;
}

inline CombinedSignal corrupt_payload(const Eigen::VectorXd& payload,
                                      std::span<const ChannelDraw> draws, Rng& rng) {
  if (payload.size() == 0) {
    throw std::invalid_argument("corrupt_payload: empty payload");
  }
  const double snr = mrc_combine(draws);
  return {add_equivalent_noise(payload, snr, rng), snr, draws.size()};
}

/// A trial's data channel. The transmit SNR is fixed; only the fading and
/// noise streams advance.
class Channel {
 public:
  Channel(TxSnr tx, Rng fading, Rng noise)
      : tx_(tx), fading_(std::move(fading)), noise_(std::move(noise)) {}

  Channel(TxSnr tx, std::uint64_t root_seed)
      : Channel(tx, make_stream(root_seed, Stream::fading),
                make_stream(root_seed, Stream::noise)) {}

  TxSnr tx_snr() const { return tx_; }

  ChannelDraw draw() { return draw_block(fading_, tx_); }

  CombinedSignal corrupt(const Eigen::VectorXd& payload, std::span<const ChannelDraw> draws) {
    return corrupt_payload(payload, draws, noise_);
  }

 private:
  TxSnr tx_;
  Rng fading_;
  Rng noise_;
};

}  // namespace edgesim
