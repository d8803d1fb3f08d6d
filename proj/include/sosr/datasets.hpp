#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sosr/tensor.hpp"

namespace sosr {

/// Immutable-after-construction labeled feature set. Features are stored
/// contiguously, one `feature_shape`-sized block per item.
struct LabeledDataset {
  Shape feature_shape;
  std::vector<float> features;
  std::vector<int> labels;
  /// CIFAR-100 coarse labels, empty for every other source.
  std::vector<int> coarse_labels;
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_size() const { return shape_size(feature_shape); }
  std::span<const float> item(std::size_t i) const {
    return {features.data() + i * feature_size(), feature_size()};
  }
  std::vector<std::size_t> class_counts() const;
  /// Items at `indices`, in that order.
  LabeledDataset select(std::span<const std::size_t> indices) const;
  /// Stacks the items at `indices` into a [n, feature_shape...] tensor.
  Tensor<float> batch(std::span<const std::size_t> indices) const;
  void validate() const;
};

struct BlobSpec {
  int num_classes = 10;
  int per_class = 500;
  int dim = 16;
  double separation = 3.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Class centers are random directions scaled to radius `separation`; each
/// item is its center plus N(0, noise_sigma^2) noise per coordinate. Items are
/// ordered class by class.
LabeledDataset gaussian_blobs(const BlobSpec& spec);

/// Splits off `holdout_per_class` random items of every class.
std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& data,
                                                          std::size_t holdout_per_class,
                                                          std::uint64_t seed);

enum class CifarLayout {
  cifar10,   ///< 1 label byte + 3072 pixel bytes
  cifar100,  ///< 1 coarse byte + 1 fine byte + 3072 pixel bytes
};

inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;
std::size_t cifar_record_size(CifarLayout layout);

/// Pixels scaled to [0,1], channel-major 3x32x32. Throws FormatError when the
/// file length is not a whole number of records.
LabeledDataset load_cifar_binary(const std::filesystem::path& path, CifarLayout layout);

/// Inverse of load_cifar_binary; pixels are written as round(255 * v).
void write_cifar_binary(const LabeledDataset& data, const std::filesystem::path& path,
                        CifarLayout layout);

/// Exactly `n_per_class` items of each class, drawn without replacement.
/// Kept items retain their original relative order.
LabeledDataset subset_per_class(const LabeledDataset& data, std::size_t n_per_class,
                                std::uint64_t seed);

struct ImbalanceProfile {
  double rho = 1.0;
  std::vector<std::size_t> per_class_counts;
  std::vector<std::string> warnings;
};

/// n_i = round(n_max * rho^(-i/(C-1))), clamped to at least 1.
ImbalanceProfile long_tail_profile(std::size_t n_max, int num_classes, double rho);

/// Subsamples each class i down to n_i items, n_max being the smallest
/// original class count.
std::pair<LabeledDataset, ImbalanceProfile> make_long_tailed(const LabeledDataset& data,
                                                             double rho, std::uint64_t seed);

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Per-channel statistics of a CxHxW dataset.
ChannelStats channel_stats(const LabeledDataset& data);
void normalize_channels(LabeledDataset& data, const ChannelStats& stats);

}  // namespace sosr
