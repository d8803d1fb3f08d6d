// Experiment command-line interface.
//
// Exit codes: 0 success, 1 I/O or format failure, 2 config or usage error,
// 3 numeric failure during training.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sosr/checkpoint.hpp"
#include "sosr/config.hpp"
#include "sosr/datasets.hpp"
#include "sosr/features.hpp"
#include "sosr/metrics_io.hpp"
#include "sosr/trainer.hpp"

namespace fs = std::filesystem;
using namespace sosr;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

/// `cifar10:<file>`, `cifar100:<file>`, or a run config whose dataset keys
/// describe the data.
TrainData load_recipe(const std::string& recipe) {
  for (const auto& [prefix, layout] : {std::pair{std::string("cifar10:"), CifarLayout::cifar10},
                                       std::pair{std::string("cifar100:"), CifarLayout::cifar100}}) {
    if (recipe.rfind(prefix, 0) == 0) {
      TrainData data;
      data.train = load_cifar_binary(recipe.substr(prefix.size()), layout);
      return data;
    }
  }
  return load_data(load_config(recipe).data);
}

const LabeledDataset& pick_split(const TrainData& data, const std::string& split) {
  if (split == "validation") {
    if (data.validation.size() == 0) throw ConfigError("data recipe has no validation split");
    return data.validation;
  }
  return data.train;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out) {
  RunConfig config = load_config(config_path);
  if (out) config.out_dir = *out;
  const std::uint64_t run_seed = seed ? *seed : config.seeds.front();
  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.cfg");
    cfg << format_config(config);
  }
  MetricsTable table{config.census_thresholds, {}};
  MetricsWriter writer(dir / "metrics.csv", config.census_thresholds);
  try {
    const auto result = train_run(config, run_seed, [&](const EpochMetrics& row) {
      writer.append(row);
      table.rows.push_back(row);
      std::cout << "epoch " << row.epoch << "  loss " << row.train_loss << "  train_acc "
                << row.train_acc << "  val_acc " << row.val_acc << '\n';
    });
    save_checkpoint(result.model, dir / "model.ckpt");
  } catch (const NumericError&) {
    write_summary(table, dir / "summary.json");
    throw;
  }
  write_summary(table, dir / "summary.json");
  std::cout << "wrote " << (dir / "metrics.csv").string() << '\n';
  return 0;
}

int run_census(const std::string& checkpoint, const std::string& recipe,
               const std::string& thresholds_text, const std::string& split) {
  const auto thresholds = parse_double_list(thresholds_text);
  const auto model = load_checkpoint(checkpoint);
  const TrainData data = load_recipe(recipe);
  const auto counts = census_overconfident(model, pick_split(data, split), thresholds);
  std::cout << "threshold,count\n";
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    std::cout << thresholds[i] << ',' << counts[i] << '\n';
  }
  return 0;
}

int run_sweep(const std::string& config_path, const std::string& axis_name,
              const std::string& values_text, std::optional<std::string> out, unsigned threads) {
  const RunConfig config = load_config(config_path);
  SweepAxis axis;
  if (axis_name == "p") axis = SweepAxis::threshold_p;
  else if (axis_name == "beta") axis = SweepAxis::beta;
  else throw ConfigError("--axis must be p or beta");
  const auto values = parse_double_list(values_text);
  if (values.empty()) throw ConfigError("--values is empty");
  const auto rows = sweep(config, axis, values, threads);
  const fs::path path = out ? fs::path(*out) : fs::path(config.out_dir) / ("sweep_" + axis_name + ".csv");
  write_sweep(rows, axis_name, path);
  std::cout << axis_name << ",mean_val_acc,std_val_acc\n";
  for (const auto& r : rows) std::cout << r.value << ',' << r.mean_val_acc << ',' << r.std_val_acc << '\n';
  return 0;
}

int run_make_imbalanced(const std::string& in, double rho, const std::string& out,
                        const std::string& layout_name, std::uint64_t seed) {
  CifarLayout layout;
  if (layout_name == "cifar100") layout = CifarLayout::cifar100;
  else if (layout_name == "cifar10") layout = CifarLayout::cifar10;
  else throw ConfigError("--layout must be cifar10 or cifar100");
  const auto data = load_cifar_binary(in, layout);
  std::pair<LabeledDataset, ImbalanceProfile> result;
  try {
    result = make_long_tailed(data, rho, seed);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  for (const auto& w : result.second.warnings) std::cerr << "warning: " << w << '\n';
  write_cifar_binary(result.first, out, layout);
  std::cout << "class,count\n";
  for (std::size_t c = 0; c < result.second.per_class_counts.size(); ++c) {
    std::cout << c << ',' << result.second.per_class_counts[c] << '\n';
  }
  return 0;
}

int run_export(const std::string& checkpoint, const std::string& recipe, const std::string& out,
               const std::string& split) {
  const auto model = load_checkpoint(checkpoint);
  const TrainData data = load_recipe(recipe);
  try {
    export_features_2d(model, pick_split(data, split), out);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  std::cout << "wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective output smoothing experiments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, recipe, thresholds = "0.7,0.9,0.99", axis, values, in, out,
                                                 layout = "cifar100", split = "train";
  std::uint64_t seed = 0;
  double rho = 1.0;
  unsigned threads = 1;
  std::optional<std::string> out_opt;

  auto* train = app.add_subcommand("train", "Run one training experiment");
  train->add_option("--config", config_path, "Run config file")->required();
  auto* seed_opt = train->add_option("--seed", seed, "Override the run seed");
  train->add_option("--out", out_opt, "Output directory (overrides out_dir)");

  auto* census = app.add_subcommand("census", "Count over-confident samples under a checkpoint");
  census->add_option("--checkpoint", checkpoint)->required();
  census->add_option("--data", recipe, "cifar10:<file>, cifar100:<file> or a config file")->required();
  census->add_option("--thresholds", thresholds);
  census->add_option("--split", split)->check(CLI::IsMember({"train", "validation"}));

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep threshold P or weight beta over seeds");
  sweep_cmd->add_option("--config", config_path)->required();
  sweep_cmd->add_option("--axis", axis)->required()->check(CLI::IsMember({"p", "beta"}));
  sweep_cmd->add_option("--values", values)->required();
  sweep_cmd->add_option("--out", out_opt, "Sweep CSV path");
  sweep_cmd->add_option("--threads", threads);

  auto* imb = app.add_subcommand("make-imbalanced", "Write a long-tailed copy of a CIFAR file");
  imb->add_option("--in", in)->required();
  imb->add_option("--rho", rho)->required();
  imb->add_option("--out", out)->required();
  imb->add_option("--layout", layout)->check(CLI::IsMember({"cifar10", "cifar100"}));
  imb->add_option("--seed", seed);

  auto* exp = app.add_subcommand("export-features", "Dump 2-D penultimate features as CSV + SVG");
  exp->add_option("--checkpoint", checkpoint)->required();
  exp->add_option("--data", recipe, "cifar10:<file>, cifar100:<file> or a config file")->required();
  exp->add_option("--out", out)->required();
  exp->add_option("--split", split)->check(CLI::IsMember({"train", "validation"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) {
      return run_train(config_path, seed_opt->count() ? std::optional(seed) : std::nullopt, out_opt);
    }
    if (census->parsed()) return run_census(checkpoint, recipe, thresholds, split);
    if (sweep_cmd->parsed()) return run_sweep(config_path, axis, values, out_opt, threads);
    if (imb->parsed()) return run_make_imbalanced(in, rho, out, layout, seed);
    if (exp->parsed()) return run_export(checkpoint, recipe, out, split);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}
