#include "sosr/metrics_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sosr {
namespace {

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string threshold_label(double t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

double parse_real(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("bad numeric cell '" + s + "' in metrics file");
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string metrics_header(const std::vector<double>& thresholds) {
  std::string h = "epoch,train_loss,ce_part,sosr_part,effective_beta,train_acc,val_acc";
  for (double t : thresholds) h += ",census_" + threshold_label(t);
  return h + ",wall_time_s";
}

std::string metrics_row(const EpochMetrics& row) {
  std::string s = std::to_string(row.epoch);
  for (double v : {row.train_loss, row.ce_part, row.sosr_part, row.effective_beta, row.train_acc,
                   row.val_acc}) {
    s += "," + real(v);
  }
  for (std::size_t c : row.census) s += "," + std::to_string(c);
  return s + "," + real(row.wall_time_s);
}

void write_metrics(const MetricsTable& table, const std::filesystem::path& path) {
  auto out = open_out(path, std::ios::trunc);
  out << metrics_header(table.thresholds) << '\n';
  for (const auto& row : table.rows) out << metrics_row(row) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("metrics file has no header");
  const auto head = split_csv(line);
  constexpr std::size_t fixed = 7;
  if (head.size() < fixed + 1 || head.back() != "wall_time_s") {
    throw FormatError("unexpected metrics header");
  }
  MetricsTable table;
  for (std::size_t c = fixed; c + 1 < head.size(); ++c) {
    const std::string& name = head[c];
    if (name.rfind("census_", 0) != 0) throw FormatError("unexpected metrics column " + name);
    table.thresholds.push_back(parse_real(name.substr(7)));
  }
  if (metrics_header(table.thresholds) != line) throw FormatError("unexpected metrics header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != head.size()) throw FormatError("metrics row has the wrong column count");
    EpochMetrics row;
    row.epoch = static_cast<int>(parse_real(cells[0]));
    row.train_loss = parse_real(cells[1]);
    row.ce_part = parse_real(cells[2]);
    row.sosr_part = parse_real(cells[3]);
    row.effective_beta = parse_real(cells[4]);
    row.train_acc = parse_real(cells[5]);
    row.val_acc = parse_real(cells[6]);
    for (std::size_t c = fixed; c + 1 < cells.size(); ++c) {
      row.census.push_back(static_cast<std::size_t>(parse_real(cells[c])));
    }
    row.wall_time_s = parse_real(cells.back());
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_summary(const MetricsTable& table, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["epochs"] = table.rows.size();
  if (!table.rows.empty()) {
    const auto& last = table.rows.back();
    const auto best = std::max_element(
        table.rows.begin(), table.rows.end(),
        [](const EpochMetrics& a, const EpochMetrics& b) { return a.val_acc < b.val_acc; });
    j["final_train_acc"] = last.train_acc;
    j["final_val_acc"] = last.val_acc;
    j["best_val_acc"] = best->val_acc;
    j["best_epoch"] = best->epoch;
    j["final_train_loss"] = last.train_loss;
    auto& census = j["final_census"];
    census = nlohmann::ordered_json::object();
    for (std::size_t t = 0; t < table.thresholds.size(); ++t) {
      census[threshold_label(table.thresholds[t])] = last.census.at(t);
    }
  }
  auto out = open_out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path,
                             const std::vector<double>& thresholds)
    : path_(path) {
  auto out = open_out(path_, std::ios::trunc);
  out << metrics_header(thresholds) << '\n';
}

void MetricsWriter::append(const EpochMetrics& row) {
  auto out = open_out(path_, std::ios::app);
  out << metrics_row(row) << '\n';
  if (!out) throw IoError("failed writing " + path_.string());
}

void write_sweep(const std::vector<SweepRow>& rows, const std::string& axis_name,
                 const std::filesystem::path& path) {
  auto out = open_out(path, std::ios::trunc);
  out << axis_name << ",mean_val_acc,std_val_acc,seeds\n";
  for (const auto& row : rows) {
    out << real(row.value) << ',' << real(row.mean_val_acc) << ',' << real(row.std_val_acc) << ','
        << row.per_seed.size() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace sosr
