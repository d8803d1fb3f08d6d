#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sosr/trainer.hpp"

namespace sosr {

struct MetricsTable {
  std::vector<double> thresholds;
  std::vector<EpochMetrics> rows;
};

/// `epoch,train_loss,ce_part,sosr_part,effective_beta,train_acc,val_acc,
/// census_<p>...,wall_time_s`, one column per census threshold.
std::string metrics_header(const std::vector<double>& thresholds);
std::string metrics_row(const EpochMetrics& row);

/// Writes the CSV (header always present, reals at full precision).
void write_metrics(const MetricsTable& table, const std::filesystem::path& path);
MetricsTable read_metrics(const std::filesystem::path& path);

/// JSON summary: epochs, final and best accuracies, best epoch, final census.
void write_summary(const MetricsTable& table, const std::filesystem::path& path);

/// Appends rows to a CSV as epochs complete, so a run that aborts still
/// leaves one row per finished epoch.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, const std::vector<double>& thresholds);
  void append(const EpochMetrics& row);

 private:
  std::filesystem::path path_;
};

struct SweepRow;
void write_sweep(const std::vector<SweepRow>& rows, const std::string& axis_name,
                 const std::filesystem::path& path);

}  // namespace sosr
