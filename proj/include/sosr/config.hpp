#pragma once

// Run configuration and its flat `key = value` text format.
//
// One assignment per line; `#` starts a comment; blank lines are ignored.
// Lists are comma separated. Unknown keys and malformed values raise
// ConfigError. See README.md for the key reference.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sosr/datasets.hpp"
#include "sosr/regularizer.hpp"

namespace sosr {

enum class DatasetKind { blobs, cifar10, cifar100 };

struct DatasetRecipe {
  DatasetKind kind = DatasetKind::blobs;
  BlobSpec blobs{};
  /// Blob items per class held out as the validation set.
  int test_per_class = 100;
  std::string train_path;
  std::string test_path;
  /// 0 keeps every training item.
  std::size_t subset_per_class = 0;
  /// 1 keeps the class distribution unchanged.
  double imbalance_rho = 1.0;
  bool normalize = false;
  /// Seed for blob generation, the train/validation split, subsetting and
  /// long-tail sampling.
  std::uint64_t seed = 0;
};

struct Regularizers {
  bool sosr = false;
  bool label_smoothing = false;
  bool confidence_penalty = false;
  bool cutmix = false;
  bool cutout = false;

  /// Canonical "a+b" form, or "none".
  std::string name() const;
  static Regularizers parse(std::string_view text);
  friend bool operator==(const Regularizers&, const Regularizers&) = default;
};

struct RunConfig {
  DatasetRecipe data;
  /// Layer list in parse_layers() syntax; input widths are inferred.
  std::string model = "dense:64,relu,dense:64,relu,dense:10";
  int epochs = 30;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> lr_milestones;
  double lr_factor = 0.1;
  std::size_t augment_pad = 0;
  double augment_flip = 0.0;
  Regularizers regularizer;
  SosrConfig sosr;
  double ls_epsilon = 0.1;
  double cp_lambda = 0.1;
  double cutmix_alpha = 1.0;
  std::size_t cutout_size = 8;
  std::vector<double> census_thresholds{0.7, 0.9, 0.99};
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs/default";
  /// When false the wall_time_s metrics column is written as 0 so metrics
  /// files are byte-reproducible.
  bool record_wall_time = false;

  /// Cross-field checks. Throws ConfigError.
  void validate() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Applies one assignment; used by the parser and by sweeps.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// Serialized form that parse_config() reads back to an equal configuration.
std::string format_config(const RunConfig& config);

/// Every accepted key, in documentation order.
const std::vector<std::string>& config_keys();

std::vector<double> parse_double_list(std::string_view text);

}  // namespace sosr
