#pragma once

// One-vs-rest linear SVM trained by regularized hinge-loss stochastic
// subgradient descent (Pegasos step size 1/(lambda*t)).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edgesim/data.hpp"
#include "edgesim/rng.hpp"

namespace edgesim {

using WeightMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Importance { less, more };

inline const char* to_string(Importance imp) {
  return imp == Importance::more ? "more" : "less";
}

/// C x (d+1) weights; column d is the bias (an appended constant-1 feature).
/// `steps` is the SGD clock: warm-started updates continue the step-size
/// schedule from it. A model with steps == 0 is wiped by its first SGD step.
class LinearModel {
 public:
  LinearModel() = default;
  LinearModel(std::size_t classes, std::size_t dims)
      : weights_(WeightMatrix::Zero(static_cast<Eigen::Index>(classes),
                                    static_cast<Eigen::Index>(dims + 1))) {}
  explicit LinearModel(WeightMatrix weights, std::uint64_t steps = 0)
      : weights_(std::move(weights)), steps_(steps) {
    if (weights_.cols() < 1) {
      throw std::invalid_argument("LinearModel: weight matrix needs a bias column");
    }
  }

  std::size_t classes() const { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t dims() const {
    return weights_.cols() == 0 ? 0 : static_cast<std::size_t>(weights_.cols() - 1);
  }

  const WeightMatrix& weights() const { return weights_; }
  WeightMatrix& weights() { return weights_; }

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  void check_dims(Eigen::Index n) const {
    if (static_cast<std::size_t>(n) != dims()) {
      throw std::invalid_argument("LinearModel: input dimension " + std::to_string(n) +
                                  " does not match model dimension " + std::to_string(dims()));
    }
  }

  Eigen::VectorXd scores(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    check_dims(x.size());
    const auto d = static_cast<Eigen::Index>(dims());
    return weights_.leftCols(d) * x + weights_.col(d);
  }

  /// Row-major flattening, C*(d+1) coefficients.
  Eigen::VectorXd flatten() const {
    return Eigen::Map<const Eigen::VectorXd>(weights_.data(), weights_.size());
  }

  static LinearModel unflatten(const Eigen::VectorXd& flat, std::size_t classes,
                               std::size_t dims) {
    if (static_cast<std::size_t>(flat.size()) != classes * (dims + 1)) {
      throw std::invalid_argument("LinearModel::unflatten: size mismatch");
    }
    WeightMatrix w = Eigen::Map<const WeightMatrix>(flat.data(), static_cast<Eigen::Index>(classes),
                                                    static_cast<Eigen::Index>(dims + 1));
    return LinearModel(std::move(w));
  }

 private:
  WeightMatrix weights_;
  std::uint64_t steps_ = 0;
};

struct TrainConfig {
  double lambda = 1e-4;
  int epochs = 1;
  /// Return the mean of the iterates of the final epoch instead of the last
  /// iterate. The step clock still advances as usual.
  bool tail_average = false;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("TrainConfig: lambda must be a positive finite number");
    }
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  }
};

/// Argmax of the class scores; ties go to the lowest class index.
inline std::size_t predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd s = model.scores(x);
  std::size_t best = 0;
  for (Eigen::Index c = 1; c < s.size(); ++c) {
    if (s[c] > s[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(c);
  }
  return best;
}

inline Importance judge(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& estimate,
                        std::size_t label) {
  return predict(model, estimate) == label ? Importance::less : Importance::more;
}

/// lambda/2 * ||W||^2 + mean over samples of the summed one-vs-rest hinge losses.
inline double svm_objective(const LinearModel& model, std::span<const Sample> buffer,
                            double lambda) {
  if (buffer.empty()) throw std::invalid_argument("svm_objective: empty buffer");
  double hinge = 0.0;
  for (const auto& s : buffer) {
    const Eigen::VectorXd sc = model.scores(s.data);
    for (Eigen::Index c = 0; c < sc.size(); ++c) {
      const double y = static_cast<std::size_t>(c) == s.label ? 1.0 : -1.0;
      hinge += std::max(0.0, 1.0 - y * sc[c]);
    }
  }
  return 0.5 * lambda * model.weights().squaredNorm() + hinge / static_cast<double>(buffer.size());
}

namespace detail {

/// Weights are kept as scale * V so the per-step shrink is O(1).
class PegasosState {
 public:
  PegasosState(WeightMatrix w, std::uint64_t clock) : v_(std::move(w)), clock_(clock) {}

  void step(const Eigen::VectorXd& x, std::size_t label, double lambda) {
    const auto d = static_cast<Eigen::Index>(x.size());
    const Eigen::VectorXd s = scale_ * (v_.leftCols(d) * x + v_.col(d));

    ++clock_;
    const double eta = 1.0 / (lambda * static_cast<double>(clock_));
    if (clock_ == 1) {
      v_.setZero();
      scale_ = 1.0;
    } else {
      scale_ *= 1.0 - 1.0 / static_cast<double>(clock_);
    }

    for (Eigen::Index c = 0; c < s.size(); ++c) {
      const double y = static_cast<std::size_t>(c) == label ? 1.0 : -1.0;
      if (y * s[c] < 1.0) {
        const double g = eta * y / scale_;
        v_.row(c).head(d) += g * x.transpose();
        v_(c, d) += g;
      }
    }
    if (scale_ < 1e-9) {
      v_ *= scale_;
      scale_ = 1.0;
    }
  }

  void accumulate(WeightMatrix& sum) const { sum += scale_ * v_; }

  LinearModel finish() && {
    v_ *= scale_;
    return LinearModel(std::move(v_), clock_);
  }

  std::uint64_t clock() const { return clock_; }

 private:
  WeightMatrix v_;
  double scale_ = 1.0;
  std::uint64_t clock_;
};

}  // namespace detail

namespace detail {

/// Shared epoch loop; `step(idx)` feeds sample idx to `state`.
template <class StepFn>
LinearModel run_epochs(const LinearModel& model, std::size_t n, const TrainConfig& cfg, Rng& rng,
                       PegasosState& state, StepFn step) {
  std::vector<std::size_t> order(n);
  WeightMatrix tail;
  for (int e = 0; e < cfg.epochs; ++e) {
    const bool averaging = cfg.tail_average && e + 1 == cfg.epochs;
    if (averaging) tail = WeightMatrix::Zero(model.weights().rows(), model.weights().cols());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (auto idx : order) {
      step(idx);
      if (averaging) state.accumulate(tail);
    }
  }
  if (cfg.tail_average) {
    tail /= static_cast<double>(n);
    return LinearModel(std::move(tail), state.clock());
  }
  return std::move(state).finish();
}

}  // namespace detail

/// Runs cfg.epochs shuffled passes over the whole buffer, warm-started from
/// `model` and continuing its step clock.
inline LinearModel update(const LinearModel& model, std::span<const Sample> buffer,
                          const TrainConfig& cfg, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("update: empty training buffer");
  cfg.validate();
  for (const auto& s : buffer) {
    model.check_dims(s.data.size());
    if (s.label >= model.classes()) throw std::invalid_argument("update: label out of range");
  }
  detail::PegasosState state(model.weights(), model.steps());
  return detail::run_epochs(model, buffer.size(), cfg, rng, state, [&](std::size_t idx) {
    state.step(buffer[idx].data, buffer[idx].label, cfg.lambda);
  });
}

/// Same training loop over the rows of a dataset.
inline LinearModel update(const LinearModel& model, const Dataset& data, const TrainConfig& cfg,
                          Rng& rng) {
  if (data.empty()) throw std::invalid_argument("update: empty training buffer");
  cfg.validate();
  model.check_dims(static_cast<Eigen::Index>(data.dims()));
  for (auto l : data.labels) {
    if (l >= model.classes()) throw std::invalid_argument("update: label out of range");
  }
  detail::PegasosState state(model.weights(), model.steps());
  Eigen::VectorXd x(static_cast<Eigen::Index>(data.dims()));
  return detail::run_epochs(model, data.size(), cfg, rng, state, [&](std::size_t idx) {
    x = data.features.row(static_cast<Eigen::Index>(idx)).transpose();
    state.step(x, data.labels[idx], cfg.lambda);
  });
}

inline double evaluate(const LinearModel& model, const Dataset& testset) {
  if (testset.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::size_t correct = 0;
  Eigen::VectorXd x(static_cast<Eigen::Index>(testset.dims()));
  for (std::size_t i = 0; i < testset.size(); ++i) {
    x = testset.features.row(static_cast<Eigen::Index>(i)).transpose();
    if (predict(model, x) == testset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

inline double evaluate(const LinearModel& model, std::span<const Sample> testset) {
  if (testset.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::size_t correct = 0;
  for (const auto& s : testset) {
    if (predict(model, s.data) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

// Binary model files: "EDGM", u32 C, u32 d, then C*(d+1) float64, all
// little-endian, row-major.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_le(std::istream& is, int bytes, const char* field) {
  unsigned char buf[8] = {};
  if (!is.read(reinterpret_cast<char*>(buf), bytes)) {
    throw std::runtime_error(std::string("model file truncated while reading ") + field);
  }
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

}  // namespace detail

inline void save_model(const LinearModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("EDGM", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(model.classes()));
  detail::put_u32(os, static_cast<std::uint32_t>(model.dims()));
  const auto& w = model.weights();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    detail::put_u64(os, std::bit_cast<std::uint64_t>(w.data()[i]));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "EDGM", 4) != 0) {
    throw std::runtime_error("bad magic in model file " + path.string());
  }
  const auto classes = detail::get_le(is, 4, "class count");
  const auto dims = detail::get_le(is, 4, "feature dimension");
  WeightMatrix w(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dims + 1));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w.data()[i] = std::bit_cast<double>(detail::get_le(is, 8, "weights"));
  }
  return LinearModel(std::move(w));
}

}  // namespace edgesim
