#include "sosr/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace sosr {
namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& data) {
  std::vector<std::vector<std::size_t>> out(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) out[data.labels[i]].push_back(i);
  return out;
}

// Picks `n` of `pool` without replacement and returns them sorted.
std::vector<std::size_t> draw_sorted(std::vector<std::size_t> pool, std::size_t n,
                                     std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts[y];
  return counts;
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.feature_shape = feature_shape;
  out.num_classes = num_classes;
  const std::size_t fs = feature_size();
  out.features.reserve(indices.size() * fs);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto x = item(i);
    out.features.insert(out.features.end(), x.begin(), x.end());
    out.labels.push_back(labels[i]);
    if (!coarse_labels.empty()) out.coarse_labels.push_back(coarse_labels[i]);
  }
  return out;
}

Tensor<float> LabeledDataset::batch(std::span<const std::size_t> indices) const {
  Shape shape = feature_shape;
  shape.insert(shape.begin(), indices.size());
  Tensor<float> out(shape);
  const std::size_t fs = feature_size();
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const auto x = item(indices[n]);
    std::copy(x.begin(), x.end(), out.data() + n * fs);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (num_classes < 1) throw InvalidInput("dataset has no classes");
  if (features.size() != labels.size() * feature_size()) {
    throw InvalidInput("dataset feature buffer does not match item count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw InvalidInput("dataset label outside [0,K)");
  }
  if (!coarse_labels.empty() && coarse_labels.size() != labels.size()) {
    throw InvalidInput("coarse label count does not match item count");
  }
}

LabeledDataset gaussian_blobs(const BlobSpec& spec) {
  if (!(spec.separation > 0.0)) throw InvalidInput("blob separation must be positive");
  if (!(spec.noise_sigma > 0.0)) throw InvalidInput("blob noise sigma must be positive");
  if (spec.num_classes < 1 || spec.per_class < 1 || spec.dim < 1) {
    throw InvalidInput("blob sizes must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const auto dim = static_cast<std::size_t>(spec.dim);

  std::vector<double> centers(spec.num_classes * dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = unit(rng);
        centers[c * dim + d] = v;
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < dim; ++d) centers[c * dim + d] *= spec.separation / norm;
  }

  LabeledDataset out;
  out.feature_shape = {dim};
  out.num_classes = spec.num_classes;
  out.features.reserve(static_cast<std::size_t>(spec.num_classes) * spec.per_class * dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int n = 0; n < spec.per_class; ++n) {
      for (std::size_t d = 0; d < dim; ++d) {
        out.features.push_back(
            static_cast<float>(centers[c * dim + d] + spec.noise_sigma * unit(rng)));
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& data,
                                                          std::size_t holdout_per_class,
                                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  std::vector<std::size_t> held;
  for (auto& pool : indices_by_class(data)) {
    if (pool.size() < holdout_per_class) {
      throw InvalidInput("holdout size exceeds a class count");
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    held.insert(held.end(), pool.begin(), pool.begin() + holdout_per_class);
    keep.insert(keep.end(), pool.begin() + holdout_per_class, pool.end());
  }
  std::sort(keep.begin(), keep.end());
  std::sort(held.begin(), held.end());
  return {data.select(keep), data.select(held)};
}

std::size_t cifar_record_size(CifarLayout layout) {
  return (layout == CifarLayout::cifar100 ? 2 : 1) + kCifarPixels;
}

LabeledDataset load_cifar_binary(const std::filesystem::path& path, CifarLayout layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR file: " + path.string());
  const std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  const std::size_t record = cifar_record_size(layout);
  if (bytes.size() % record != 0) {
    throw FormatError("CIFAR file length " + std::to_string(bytes.size()) +
                      " is not a multiple of the record size " + std::to_string(record));
  }
  const std::size_t n = bytes.size() / record;
  LabeledDataset out;
  out.feature_shape = {3, 32, 32};
  out.num_classes = layout == CifarLayout::cifar100 ? 100 : 10;
  out.features.resize(n * kCifarPixels);
  out.labels.resize(n);
  if (layout == CifarLayout::cifar100) out.coarse_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * record;
    if (layout == CifarLayout::cifar100) {
      out.coarse_labels[i] = rec[0];
      out.labels[i] = rec[1];
      rec += 2;
    } else {
      out.labels[i] = rec[0];
      rec += 1;
    }
    if (out.labels[i] >= out.num_classes) {
      throw FormatError("record " + std::to_string(i) + " has label " +
                        std::to_string(out.labels[i]) + " outside the class range");
    }
    float* dst = out.features.data() + i * kCifarPixels;
    for (std::size_t p = 0; p < kCifarPixels; ++p) dst[p] = static_cast<float>(rec[p]) / 255.0f;
  }
  return out;
}

void write_cifar_binary(const LabeledDataset& data, const std::filesystem::path& path,
                        CifarLayout layout) {
  if (data.feature_shape != Shape{3, 32, 32}) {
    throw InvalidInput("CIFAR export needs 3x32x32 features");
  }
  const int max_classes = layout == CifarLayout::cifar100 ? 100 : 10;
  if (data.num_classes > max_classes) throw InvalidInput("too many classes for CIFAR layout");
  std::vector<char> bytes;
  bytes.reserve(data.size() * cifar_record_size(layout));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (layout == CifarLayout::cifar100) {
      bytes.push_back(static_cast<char>(data.coarse_labels.empty() ? 0 : data.coarse_labels[i]));
    }
    bytes.push_back(static_cast<char>(data.labels[i]));
    for (float v : data.item(i)) {
      const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(scaled)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing: " + path.string());
}

LabeledDataset subset_per_class(const LabeledDataset& data, std::size_t n_per_class,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& pool : indices_by_class(data)) {
    if (pool.size() < n_per_class) {
      throw InvalidInput("subset size " + std::to_string(n_per_class) +
                         " exceeds a class count of " + std::to_string(pool.size()));
    }
    auto picked = draw_sorted(std::move(pool), n_per_class, rng);
    chosen.insert(chosen.end(), picked.begin(), picked.end());
  }
  std::sort(chosen.begin(), chosen.end());
  return data.select(chosen);
}

ImbalanceProfile long_tail_profile(std::size_t n_max, int num_classes, double rho) {
  if (!(rho >= 1.0)) throw InvalidInput("imbalance ratio must be >= 1");
  if (num_classes < 1) throw InvalidInput("imbalance profile needs at least one class");
  ImbalanceProfile profile;
  profile.rho = rho;
  for (int i = 0; i < num_classes; ++i) {
    const double exponent = num_classes == 1 ? 0.0 : -static_cast<double>(i) / (num_classes - 1);
    auto n = static_cast<std::size_t>(std::llround(static_cast<double>(n_max) * std::pow(rho, exponent)));
    if (n == 0) {
      profile.warnings.push_back("class " + std::to_string(i) + " count rounded to 0; clamped to 1");
      n = 1;
    }
    profile.per_class_counts.push_back(n);
  }
  return profile;
}

std::pair<LabeledDataset, ImbalanceProfile> make_long_tailed(const LabeledDataset& data,
                                                             double rho, std::uint64_t seed) {
  const auto counts = data.class_counts();
  const std::size_t n_max = *std::min_element(counts.begin(), counts.end());
  if (n_max == 0) throw InvalidInput("a class has no items");
  ImbalanceProfile profile = long_tail_profile(n_max, data.num_classes, rho);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  auto pools = indices_by_class(data);
  for (int c = 0; c < data.num_classes; ++c) {
    auto picked = draw_sorted(std::move(pools[c]), profile.per_class_counts[c], rng);
    chosen.insert(chosen.end(), picked.begin(), picked.end());
  }
  std::sort(chosen.begin(), chosen.end());
  return {data.select(chosen), std::move(profile)};
}

ChannelStats channel_stats(const LabeledDataset& data) {
  if (data.feature_shape.size() != 3) throw InvalidInput("channel stats need CxHxW features");
  const std::size_t ch = data.feature_shape[0];
  const std::size_t plane = data.feature_shape[1] * data.feature_shape[2];
  std::vector<double> sum(ch, 0.0), sq(ch, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.item(i);
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = x[c * plane + p];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
  }
  ChannelStats stats;
  const double n = static_cast<double>(data.size() * plane);
  for (std::size_t c = 0; c < ch; ++c) {
    const double mean = sum[c] / n;
    const double var = std::max(sq[c] / n - mean * mean, 1e-12);
    stats.mean.push_back(static_cast<float>(mean));
    stats.stddev.push_back(static_cast<float>(std::sqrt(var)));
  }
  return stats;
}

void normalize_channels(LabeledDataset& data, const ChannelStats& stats) {
  if (data.feature_shape.size() != 3 || stats.mean.size() != data.feature_shape[0]) {
    throw InvalidInput("channel stats do not match dataset");
  }
  const std::size_t ch = data.feature_shape[0];
  const std::size_t plane = data.feature_shape[1] * data.feature_shape[2];
  for (std::size_t i = 0; i < data.size(); ++i) {
    float* x = data.features.data() + i * data.feature_size();
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        x[c * plane + p] = (x[c * plane + p] - stats.mean[c]) / stats.stddev[c];
      }
    }
  }
}

}  // namespace sosr
