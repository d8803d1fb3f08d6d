#include "sosr/features.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace sosr {
namespace {

constexpr double kCanvas = 600.0;
constexpr double kMargin = 30.0;
constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                  "#bcbd22", "#17becf"};

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_svg(const std::vector<FeaturePoint>& points, const std::filesystem::path& path) {
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  if (!points.empty()) {
    const auto [xa, xb] = std::minmax_element(points.begin(), points.end(),
                                              [](auto& a, auto& b) { return a.x < b.x; });
    const auto [ya, yb] = std::minmax_element(points.begin(), points.end(),
                                              [](auto& a, auto& b) { return a.y < b.y; });
    x_lo = xa->x, x_hi = xb->x, y_lo = ya->y, y_hi = yb->y;
  }
  if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
  const double span = kCanvas - 2 * kMargin;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" "
         "viewBox=\"0 0 600 600\">\n"
      << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (const auto& p : points) {
    const double cx = kMargin + (p.x - x_lo) / (x_hi - x_lo) * span;
    const double cy = kCanvas - kMargin - (p.y - y_lo) / (y_hi - y_lo) * span;
    out << "<circle cx=\"" << real(cx) << "\" cy=\"" << real(cy) << "\" r=\"2\" fill=\""
        << kPalette[static_cast<std::size_t>(p.label) % kPalette.size()] << "\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::vector<FeaturePoint> extract_features_2d(const Model<float>& model,
                                              const LabeledDataset& data) {
  const auto& layers = model.layers();
  if (layers.empty() || !std::holds_alternative<DenseSpec>(layers.back())) {
    throw InvalidInput("feature export needs a model ending in a dense layer");
  }
  const std::size_t penultimate = layers.size() - 1;
  const Shape feature = model.shape_after(penultimate);
  if (feature != Shape{2}) {
    throw InvalidInput("penultimate width is " + shape_string(feature) + ", feature export needs 2");
  }
  std::vector<FeaturePoint> points;
  points.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += 512) {
    const std::size_t end = std::min(data.size(), start + 512);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<float> acts = model.infer(data.batch(idx), penultimate);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      points.push_back({acts[2 * i], acts[2 * i + 1], data.labels[start + i]});
    }
  }
  return points;
}

void write_feature_dump(const std::vector<FeaturePoint>& points,
                        const std::filesystem::path& csv_path) {
  if (csv_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(csv_path.parent_path(), ec);
  }
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << "x,y,label\n";
  for (const auto& p : points) out << real(p.x) << ',' << real(p.y) << ',' << p.label << '\n';
  if (!out) throw IoError("failed writing " + csv_path.string());
  auto svg = csv_path;
  svg.replace_extension(".svg");
  write_svg(points, svg);
}

std::vector<FeaturePoint> read_feature_dump(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) || line != "x,y,label") throw FormatError("bad feature dump header");
  std::vector<FeaturePoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c)) {
      throw FormatError("bad feature dump row: " + line);
    }
    points.push_back({std::stod(a), std::stod(b), std::stoi(c)});
  }
  return points;
}

void export_features_2d(const Model<float>& model, const LabeledDataset& data,
                        const std::filesystem::path& csv_path) {
  write_feature_dump(extract_features_2d(model, data), csv_path);
}

}  // namespace sosr
