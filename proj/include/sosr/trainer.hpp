#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sosr/config.hpp"
#include "sosr/model.hpp"

namespace sosr {

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double ce_part = 0.0;
  double sosr_part = 0.0;
  double effective_beta = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  /// Over-confident training samples per census threshold.
  std::vector<std::size_t> census;
  double wall_time_s = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainData {
  LabeledDataset train;
  LabeledDataset validation;
};

/// Materializes the dataset recipe: generation or loading, subsetting,
/// long-tail sampling and optional channel normalization.
TrainData load_data(const DatasetRecipe& recipe);

struct EvalResult {
  std::size_t correct = 0;
  double accuracy = 0.0;
  double mean_ce = 0.0;
  /// Per threshold: samples with correct argmax and p_y > threshold.
  std::vector<std::size_t> census;
};

/// Accuracy (argmax, ties to the lowest index), mean CE and census over a
/// logit batch.
EvalResult evaluate_logits(const Matrix& logits, std::span<const int> labels,
                           std::span<const double> thresholds = {});

/// Evaluation-mode pass (no augmentation) over `data`.
EvalResult evaluate(const Model<float>& model, const LabeledDataset& data,
                    std::span<const double> thresholds = {});

std::vector<std::size_t> census_overconfident(const Model<float>& model,
                                              const LabeledDataset& data,
                                              std::span<const double> thresholds);

struct TrainResult {
  Model<float> model;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains one run. The data order, augmentation and initialization depend
/// only on `seed`, never on the regularizer, so matched-seed runs see the
/// same stream. Throws NumericError naming the epoch and batch when the
/// loss turns non-finite; `on_epoch` has already seen every completed epoch.
TrainResult train_run(const RunConfig& config, const TrainData& data, std::uint64_t seed,
                      const EpochCallback& on_epoch = {});
TrainResult train_run(const RunConfig& config, std::uint64_t seed,
                      const EpochCallback& on_epoch = {});

enum class SweepAxis { threshold_p, beta };

struct SweepRow {
  double value = 0.0;
  double mean_val_acc = 0.0;
  double std_val_acc = 0.0;
  std::vector<double> per_seed;
};

/// One run per (value, seed); reports final validation accuracy. Runs are
/// independent and execute on up to `threads` worker threads.
std::vector<SweepRow> sweep(const RunConfig& config, SweepAxis axis, std::span<const double> values,
                            unsigned threads = 1);

}  // namespace sosr
