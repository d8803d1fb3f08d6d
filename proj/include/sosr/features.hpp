#pragma once

#include <filesystem>
#include <vector>

#include "sosr/datasets.hpp"
#include "sosr/model.hpp"

namespace sosr {

struct FeaturePoint {
  double x = 0.0;
  double y = 0.0;
  int label = 0;
};

/// Input activations of the final dense layer, one row per sample. The
/// model must end in a dense layer whose input width is 2.
std::vector<FeaturePoint> extract_features_2d(const Model<float>& model,
                                              const LabeledDataset& data);

/// Writes `x,y,label` CSV to `csv_path` and a 600x600 scatter plot next to
/// it with the extension replaced by `.svg`.
void write_feature_dump(const std::vector<FeaturePoint>& points,
                        const std::filesystem::path& csv_path);

std::vector<FeaturePoint> read_feature_dump(const std::filesystem::path& csv_path);

void export_features_2d(const Model<float>& model, const LabeledDataset& data,
                        const std::filesystem::path& csv_path);

}  // namespace sosr
