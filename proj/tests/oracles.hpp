#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// they are used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "edgesim/data.hpp"

namespace oracle {

/// Kolmogorov-Smirnov distance between a sample and Exp(1).
inline double ks_exponential(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = 1.0 - std::exp(-xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  return d;
}

/// Mean number of unit-mean exponential draws (times tx_snr) whose running sum
/// first reaches `threshold`. Uses inverse-CDF sampling on its own generator.
inline double renewal_mean_blocks(double threshold, double tx_snr, std::size_t runs,
                                  std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double total = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    double sum = 0.0;
    std::size_t blocks = 0;
    do {
      sum += -std::log1p(-u(gen)) * tx_snr;
      ++blocks;
    } while (sum < threshold);
    total += static_cast<double>(blocks);
  }
  return total / static_cast<double>(runs);
}

/// floor(d * n / sum) for every d, in arbitrary-precision integers.
inline std::vector<std::size_t> proportional_floor(const std::vector<std::size_t>& sizes,
                                                   std::size_t n) {
  using boost::multiprecision::cpp_int;
  cpp_int sum = 0;
  for (auto d : sizes) sum += cpp_int(d);
  std::vector<std::size_t> out;
  for (auto d : sizes) out.push_back(static_cast<std::size_t>(cpp_int(cpp_int(d) * n / sum)));
  return out;
}

/// Class scores by explicit loops, ties to lowest index.
inline std::size_t brute_predict(const Eigen::MatrixXd& w, const Eigen::VectorXd& x) {
  std::size_t best = 0;
  double best_score = -INFINITY;
  for (Eigen::Index c = 0; c < w.rows(); ++c) {
    double s = w(c, w.cols() - 1);
    for (Eigen::Index j = 0; j < x.size(); ++j) s += w(c, j) * x[j];
    if (s > best_score) {
      best_score = s;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

/// True when every class-a point projects strictly below every class-b point
/// along `direction` (exhaustive pairwise check).
inline bool pairwise_separated(const edgesim::Dataset& ds, std::size_t a, std::size_t b,
                               const Eigen::VectorXd& direction) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != a) continue;
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (ds.labels[j] != b) continue;
      const Eigen::VectorXd diff = (ds.features.row(static_cast<Eigen::Index>(j)) -
                                    ds.features.row(static_cast<Eigen::Index>(i))).transpose();
      if (!(diff.dot(direction) > 0.0)) return false;
    }
  }
  return true;
}

inline double sample_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace oracle

namespace oracle {

/// Plain Pegasos on explicit weights, no scale trick. Consumes `rng` exactly
/// as the library does (one std::shuffle per epoch), so results agree up to
/// rounding.
struct NaivePegasos {
  Eigen::MatrixXd w;  // C x (d+1), bias last
  std::uint64_t t = 0;

  NaivePegasos(std::size_t classes, std::size_t dims)
      : w(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes),
                                static_cast<Eigen::Index>(dims + 1))) {}

  void step(const Eigen::VectorXd& x, std::size_t label, double lambda) {
    const Eigen::Index d = x.size();
    Eigen::VectorXd s(w.rows());
    for (Eigen::Index c = 0; c < w.rows(); ++c) s[c] = w.row(c).head(d).dot(x) + w(c, d);
    ++t;
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    w *= 1.0 - 1.0 / static_cast<double>(t);
    for (Eigen::Index c = 0; c < w.rows(); ++c) {
      const double y = static_cast<std::size_t>(c) == label ? 1.0 : -1.0;
      if (y * s[c] < 1.0) {
        w.row(c).head(d) += eta * y * x.transpose();
        w(c, d) += eta * y;
      }
    }
  }

  template <class Engine>
  void epoch(const std::vector<edgesim::Sample>& buffer, double lambda, Engine& rng) {
    std::vector<std::size_t> order(buffer.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) step(buffer[i].data, buffer[i].label, lambda);
  }

  double accuracy(const edgesim::Dataset& test) const {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Eigen::VectorXd x = test.features.row(static_cast<Eigen::Index>(i)).transpose();
      ok += brute_predict(w, x) == test.labels[i];
    }
    return static_cast<double>(ok) / static_cast<double>(test.size());
  }
};

}  // namespace oracle
