#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace edgesim {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A feature vector and its class index.
struct Sample {
  Eigen::VectorXd data;
  std::size_t label = 0;
};

/// n samples of dimension d, one per row, with labels in [0, num_classes).
struct Dataset {
  FeatureMatrix features;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }
  bool empty() const { return labels.empty(); }

  Sample sample(std::size_t i) const {
    return {features.row(static_cast<Eigen::Index>(i)).transpose(), labels[i]};
  }

  void validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
      throw std::invalid_argument("Dataset: feature rows and label count differ");
    }
    for (auto l : labels) {
      if (l >= num_classes) {
        throw std::invalid_argument("Dataset: label " + std::to_string(l) +
                                    " outside class range " + std::to_string(num_classes));
      }
    }
  }
};

/// Rows `indices` of `source`, in that order.
inline Dataset select_rows(const Dataset& source, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.num_classes = source.num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), source.features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) =
        source.features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(source.labels[indices[r]]);
  }
  return out;
}

inline double mean_square(const Dataset& ds) {
  if (ds.features.size() == 0) return 0.0;
  return ds.features.squaredNorm() / static_cast<double>(ds.features.size());
}

/// Rescales all features by one global factor so the mean squared entry is 1.
/// Returns the factor applied; an all-zero dataset is left untouched.
inline double normalize_power(Dataset& ds) {
  const double ms = mean_square(ds);
  if (ms <= 0.0) return 1.0;
  const double scale = 1.0 / std::sqrt(ms);
  ds.features *= scale;
  return scale;
}

}  // namespace edgesim
