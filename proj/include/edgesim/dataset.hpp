#pragma once

// Dataset sources (IDX files, synthetic Gaussian blobs), class-stratified
// subsetting, and disjoint splits across wireless devices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "edgesim/data.hpp"
#include "edgesim/rng.hpp"

namespace edgesim {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::string& what) {
  if (bytes.size() < offset + 4) throw FormatError(what + ": file truncated in header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) os.put(static_cast<char>((v >> shift) & 0xffu));
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder, ties to the lower index). The parts sum to `total` exactly.
inline std::vector<std::size_t> apportion(const std::vector<double>& quotas, std::size_t total) {
  std::vector<std::size_t> parts(quotas.size());
  std::vector<double> rem(quotas.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < quotas.size(); ++i) {
    parts[i] = static_cast<std::size_t>(std::floor(quotas[i]));
    rem[i] = quotas[i] - static_cast<double>(parts[i]);
    assigned += parts[i];
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < total && i < order.size(); ++i, ++assigned) {
    ++parts[order[i]];
  }
  return parts;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  return by_class;
}

}  // namespace detail

/// Parses an IDX image/label pair. Pixels are scaled from [0,255] to [0,1];
/// no power normalization is applied.
inline Dataset load_idx_raw(const std::filesystem::path& images_path,
                            const std::filesystem::path& labels_path) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  const auto img_magic = detail::read_be32(img, 0, "images");
  if (img_magic != kIdxImageMagic) {
    throw FormatError(fmt::format("images: bad magic 0x{:08x} (expected 0x{:08x})", img_magic,
                                  kIdxImageMagic));
  }
  const auto n = detail::read_be32(img, 4, "images");
  const auto rows = detail::read_be32(img, 8, "images");
  const auto cols = detail::read_be32(img, 12, "images");
  const std::size_t dims = std::size_t{rows} * cols;
  if (img.size() < 16 + std::size_t{n} * dims) {
    throw FormatError(fmt::format("images: file truncated ({} pixel bytes for {} images of {}x{})",
                                  img.size() - 16, n, rows, cols));
  }

  const auto lab_magic = detail::read_be32(lab, 0, "labels");
  if (lab_magic != kIdxLabelMagic) {
    throw FormatError(fmt::format("labels: bad magic 0x{:08x} (expected 0x{:08x})", lab_magic,
                                  kIdxLabelMagic));
  }
  const auto n_labels = detail::read_be32(lab, 4, "labels");
  if (lab.size() < 8 + std::size_t{n_labels}) {
    throw FormatError(fmt::format("labels: file truncated ({} label bytes for {} labels)",
                                  lab.size() - 8, n_labels));
  }
  if (n_labels != n) {
    throw FormatError(
        fmt::format("labels: count {} does not match image count {}", n_labels, n));
  }
  if (n == 0) throw FormatError("images: file holds no samples");

  Dataset ds;
  ds.features.resize(n, static_cast<Eigen::Index>(dims));
  ds.labels.resize(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = img.data() + 16 + i * dims;
    for (std::size_t j = 0; j < dims; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    }
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

/// load_idx_raw followed by power normalization (mean squared entry 1).
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  Dataset ds = load_idx_raw(images_path, labels_path);
  normalize_power(ds);
  return ds;
}

/// Writes features in [0,1] as u8 pixels (rounded, clamped). `rows * cols`
/// must equal the feature dimension.
inline void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path, std::uint32_t rows,
                      std::uint32_t cols) {
  if (std::size_t{rows} * cols != ds.dims()) {
    throw std::invalid_argument("write_idx: rows*cols does not match feature dimension");
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");

  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::write_be32(img, rows);
  detail::write_be32(img, cols);
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      const double v = std::clamp(std::round(ds.features(i, j) * 255.0), 0.0, 255.0);
      img.put(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (auto l : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(l)));
}

/// Class c is centred at separation * e_(c mod dims) with unit isotropic
/// spread; rows are grouped by class. The result is power-normalized.
inline Dataset synth_blobs(std::size_t classes, std::size_t dims, std::size_t per_class,
                           double separation, Rng& rng) {
  if (classes < 1 || dims < 1 || per_class < 1 || !(separation > 0.0)) {
    throw std::invalid_argument("synth_blobs: counts must be >= 1 and separation > 0");
  }
  std::normal_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.num_classes = classes;
  ds.features.resize(static_cast<Eigen::Index>(classes * per_class),
                     static_cast<Eigen::Index>(dims));
  ds.labels.reserve(classes * per_class);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dims; ++j) {
        ds.features(row, static_cast<Eigen::Index>(j)) =
            unit(rng) + (j == c % dims ? separation : 0.0);
      }
      ds.labels.push_back(c);
    }
  }
  normalize_power(ds);
  return ds;
}

/// Draws `count` samples with per-class counts proportional to the class
/// frequencies of `source`. Selected rows keep their original relative order.
inline Dataset stratified_subset(const Dataset& source, std::size_t count, Rng& rng) {
  if (count > source.size()) {
    throw std::invalid_argument(fmt::format("stratified_subset: requested {} of {} samples",
                                            count, source.size()));
  }
  auto by_class = detail::indices_by_class(source);
  std::vector<double> quotas;
  for (const auto& members : by_class) {
    quotas.push_back(static_cast<double>(members.size()) * static_cast<double>(count) /
                     static_cast<double>(source.size()));
  }
  const auto take = detail::apportion(quotas, count);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    chosen.insert(chosen.end(), by_class[c].begin(),
                  by_class[c].begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(chosen.begin(), chosen.end());
  return select_rows(source, chosen);
}

/// How the training set is divided among K wireless devices.
struct SplitSpec {
  enum class Mode { random, ratio };

  Mode mode = Mode::random;
  std::size_t wds = 1;
  double ratio = 1.0;  ///< D1/D2, ratio mode only (K = 2)

  /// K disjoint parts with random sizes: K-1 distinct cut points drawn
  /// uniformly from 1..n-1, applied to a random permutation.
  static SplitSpec random(std::size_t k) { return {Mode::random, k, 1.0}; }

  /// Two class-stratified parts with |D1| = round(n*r/(1+r)).
  static SplitSpec by_ratio(double r) { return {Mode::ratio, 2, r}; }

  void validate() const {
    if (wds < 1) throw std::invalid_argument("SplitSpec: number of devices must be >= 1");
    if (mode == Mode::ratio && !(ratio > 0.0 && std::isfinite(ratio))) {
      throw std::invalid_argument("SplitSpec: ratio must be positive and finite");
    }
  }
};

/// Index sets of each device's share; they partition 0..n-1, each sorted.
inline std::vector<std::vector<std::size_t>> split_indices(const Dataset& ds,
                                                           const SplitSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t n = ds.size();
  if (spec.wds > n) {
    throw std::invalid_argument(
        fmt::format("split: {} devices requested for {} samples", spec.wds, n));
  }

  std::vector<std::vector<std::size_t>> parts(spec.wds);
  if (spec.mode == SplitSpec::Mode::ratio) {
    const double share = spec.ratio / (1.0 + spec.ratio);
    const auto first_total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * share));
    auto by_class = detail::indices_by_class(ds);
    std::vector<double> quotas;
    for (const auto& members : by_class) quotas.push_back(static_cast<double>(members.size()) * share);
    const auto first_take = detail::apportion(quotas, first_total);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& members = by_class[c];
      std::shuffle(members.begin(), members.end(), rng);
      const auto cut = members.begin() + static_cast<std::ptrdiff_t>(first_take[c]);
      parts[0].insert(parts[0].end(), members.begin(), cut);
      parts[1].insert(parts[1].end(), cut, members.end());
    }
  } else {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<std::size_t> cuts(n > 0 ? n - 1 : 0);
    std::iota(cuts.begin(), cuts.end(), std::size_t{1});
    // Partial Fisher-Yates: the first K-1 entries become the cut points.
    for (std::size_t i = 0; i + 1 < spec.wds; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, cuts.size() - 1);
      std::swap(cuts[i], cuts[pick(rng)]);
    }
    cuts.resize(spec.wds - 1);
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(n);

    std::size_t begin = 0;
    for (std::size_t k = 0; k < spec.wds; ++k) {
      parts[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                      perm.begin() + static_cast<std::ptrdiff_t>(cuts[k]));
      begin = cuts[k];
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

inline std::vector<Dataset> split(const Dataset& ds, const SplitSpec& spec, Rng& rng) {
  std::vector<Dataset> out;
  for (const auto& idx : split_indices(ds, spec, rng)) out.push_back(select_rows(ds, idx));
  return out;
}

}  // namespace edgesim
