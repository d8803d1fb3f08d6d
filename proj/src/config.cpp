#include "sosr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sosr/model.hpp"
#include "sosr/optimizer.hpp"

namespace sosr {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in{std::string(text)};
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw ConfigError("key '" + key + "': must be nonnegative");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"dataset",
       [](RunConfig& c, const std::string& v) {
         if (v == "blobs") c.data.kind = DatasetKind::blobs;
         else if (v == "cifar10") c.data.kind = DatasetKind::cifar10;
         else if (v == "cifar100") c.data.kind = DatasetKind::cifar100;
         else throw ConfigError("key 'dataset': expected blobs, cifar10 or cifar100");
       },
       [](const RunConfig& c) -> std::string {
         switch (c.data.kind) {
           case DatasetKind::blobs: return "blobs";
           case DatasetKind::cifar10: return "cifar10";
           case DatasetKind::cifar100: return "cifar100";
         }
         return "blobs";
       }},
      {"blobs.classes",
       [](RunConfig& c, const std::string& v) { c.data.blobs.num_classes = static_cast<int>(to_int("blobs.classes", v)); },
       [](const RunConfig& c) { return std::to_string(c.data.blobs.num_classes); }},
      {"blobs.per_class",
       [](RunConfig& c, const std::string& v) { c.data.blobs.per_class = static_cast<int>(to_int("blobs.per_class", v)); },
       [](const RunConfig& c) { return std::to_string(c.data.blobs.per_class); }},
      {"blobs.test_per_class",
       [](RunConfig& c, const std::string& v) { c.data.test_per_class = static_cast<int>(to_int("blobs.test_per_class", v)); },
       [](const RunConfig& c) { return std::to_string(c.data.test_per_class); }},
      {"blobs.dim",
       [](RunConfig& c, const std::string& v) { c.data.blobs.dim = static_cast<int>(to_int("blobs.dim", v)); },
       [](const RunConfig& c) { return std::to_string(c.data.blobs.dim); }},
      {"blobs.separation",
       [](RunConfig& c, const std::string& v) { c.data.blobs.separation = to_double("blobs.separation", v); },
       [](const RunConfig& c) { return fmt(c.data.blobs.separation); }},
      {"blobs.noise",
       [](RunConfig& c, const std::string& v) { c.data.blobs.noise_sigma = to_double("blobs.noise", v); },
       [](const RunConfig& c) { return fmt(c.data.blobs.noise_sigma); }},
      {"data.train_path",
       [](RunConfig& c, const std::string& v) { c.data.train_path = v; },
       [](const RunConfig& c) { return c.data.train_path; }},
      {"data.test_path",
       [](RunConfig& c, const std::string& v) { c.data.test_path = v; },
       [](const RunConfig& c) { return c.data.test_path; }},
      {"data.subset_per_class",
       [](RunConfig& c, const std::string& v) { c.data.subset_per_class = to_count("data.subset_per_class", v); },
       [](const RunConfig& c) { return std::to_string(c.data.subset_per_class); }},
      {"data.imbalance_rho",
       [](RunConfig& c, const std::string& v) { c.data.imbalance_rho = to_double("data.imbalance_rho", v); },
       [](const RunConfig& c) { return fmt(c.data.imbalance_rho); }},
      {"data.normalize",
       [](RunConfig& c, const std::string& v) { c.data.normalize = to_bool("data.normalize", v); },
       [](const RunConfig& c) -> std::string { return c.data.normalize ? "true" : "false"; }},
      {"data.seed",
       [](RunConfig& c, const std::string& v) { c.data.seed = to_count("data.seed", v); },
       [](const RunConfig& c) { return std::to_string(c.data.seed); }},
      {"model",
       [](RunConfig& c, const std::string& v) { c.model = v; },
       [](const RunConfig& c) { return c.model; }},
      {"epochs",
       [](RunConfig& c, const std::string& v) { c.epochs = static_cast<int>(to_int("epochs", v)); },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) { c.batch_size = to_count("batch_size", v); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"lr",
       [](RunConfig& c, const std::string& v) { c.lr = to_double("lr", v); },
       [](const RunConfig& c) { return fmt(c.lr); }},
      {"momentum",
       [](RunConfig& c, const std::string& v) { c.momentum = to_double("momentum", v); },
       [](const RunConfig& c) { return fmt(c.momentum); }},
      {"weight_decay",
       [](RunConfig& c, const std::string& v) { c.weight_decay = to_double("weight_decay", v); },
       [](const RunConfig& c) { return fmt(c.weight_decay); }},
      {"lr_milestones",
       [](RunConfig& c, const std::string& v) {
         c.lr_milestones.clear();
         for (const auto& item : split_list(v)) {
           c.lr_milestones.push_back(static_cast<int>(to_int("lr_milestones", item)));
         }
       },
       [](const RunConfig& c) { return join(c.lr_milestones); }},
      {"lr_factor",
       [](RunConfig& c, const std::string& v) { c.lr_factor = to_double("lr_factor", v); },
       [](const RunConfig& c) { return fmt(c.lr_factor); }},
      {"augment.pad",
       [](RunConfig& c, const std::string& v) { c.augment_pad = to_count("augment.pad", v); },
       [](const RunConfig& c) { return std::to_string(c.augment_pad); }},
      {"augment.flip",
       [](RunConfig& c, const std::string& v) { c.augment_flip = to_double("augment.flip", v); },
       [](const RunConfig& c) { return fmt(c.augment_flip); }},
      {"regularizer",
       [](RunConfig& c, const std::string& v) { c.regularizer = Regularizers::parse(v); },
       [](const RunConfig& c) { return c.regularizer.name(); }},
      {"sosr.p",
       [](RunConfig& c, const std::string& v) { c.sosr.threshold_p = to_double("sosr.p", v); },
       [](const RunConfig& c) { return fmt(c.sosr.threshold_p); }},
      {"sosr.beta",
       [](RunConfig& c, const std::string& v) { c.sosr.beta = to_double("sosr.beta", v); },
       [](const RunConfig& c) { return fmt(c.sosr.beta); }},
      {"sosr.variant",
       [](RunConfig& c, const std::string& v) {
         if (v == "standard") c.sosr.variant.kind = VariantKind::standard;
         else if (v == "complete") c.sosr.variant.kind = VariantKind::complete;
         else if (v == "random_sampled") c.sosr.variant.kind = VariantKind::random_sampled;
         else throw ConfigError("key 'sosr.variant': expected standard, complete or random_sampled");
       },
       [](const RunConfig& c) -> std::string {
         switch (c.sosr.variant.kind) {
           case VariantKind::standard: return "standard";
           case VariantKind::complete: return "complete";
           case VariantKind::random_sampled: return "random_sampled";
         }
         return "standard";
       }},
      {"sosr.random_fraction",
       [](RunConfig& c, const std::string& v) { c.sosr.variant.fraction = to_double("sosr.random_fraction", v); },
       [](const RunConfig& c) { return fmt(c.sosr.variant.fraction); }},
      {"sosr.schedule",
       [](RunConfig& c, const std::string& v) {
         if (v == "constant") c.sosr.schedule.kind = ScheduleKind::constant;
         else if (v == "linear_up") c.sosr.schedule.kind = ScheduleKind::linear_up;
         else if (v == "linear_down") c.sosr.schedule.kind = ScheduleKind::linear_down;
         else if (v == "warm_up") c.sosr.schedule.kind = ScheduleKind::warm_up;
         else throw ConfigError("key 'sosr.schedule': expected constant, linear_up, linear_down or warm_up");
       },
       [](const RunConfig& c) -> std::string {
         switch (c.sosr.schedule.kind) {
           case ScheduleKind::constant: return "constant";
           case ScheduleKind::linear_up: return "linear_up";
           case ScheduleKind::linear_down: return "linear_down";
           case ScheduleKind::warm_up: return "warm_up";
         }
         return "constant";
       }},
      {"sosr.warmup_peak",
       [](RunConfig& c, const std::string& v) { c.sosr.schedule.peak_epoch = static_cast<int>(to_int("sosr.warmup_peak", v)); },
       [](const RunConfig& c) { return std::to_string(c.sosr.schedule.peak_epoch); }},
      {"label_smoothing.epsilon",
       [](RunConfig& c, const std::string& v) { c.ls_epsilon = to_double("label_smoothing.epsilon", v); },
       [](const RunConfig& c) { return fmt(c.ls_epsilon); }},
      {"confidence_penalty.lambda",
       [](RunConfig& c, const std::string& v) { c.cp_lambda = to_double("confidence_penalty.lambda", v); },
       [](const RunConfig& c) { return fmt(c.cp_lambda); }},
      {"cutmix.alpha",
       [](RunConfig& c, const std::string& v) { c.cutmix_alpha = to_double("cutmix.alpha", v); },
       [](const RunConfig& c) { return fmt(c.cutmix_alpha); }},
      {"cutout.size",
       [](RunConfig& c, const std::string& v) { c.cutout_size = to_count("cutout.size", v); },
       [](const RunConfig& c) { return std::to_string(c.cutout_size); }},
      {"census.thresholds",
       [](RunConfig& c, const std::string& v) { c.census_thresholds = parse_double_list(v); },
       [](const RunConfig& c) { return join(c.census_thresholds); }},
      {"seeds",
       [](RunConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) c.seeds.push_back(to_count("seeds", item));
       },
       [](const RunConfig& c) { return join(c.seeds); }},
      {"out_dir",
       [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
      {"record_wall_time",
       [](RunConfig& c, const std::string& v) { c.record_wall_time = to_bool("record_wall_time", v); },
       [](const RunConfig& c) -> std::string { return c.record_wall_time ? "true" : "false"; }},
  };
  return table;
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(to_double("list", item));
  return out;
}

std::string Regularizers::name() const {
  std::string out;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += n;
  };
  add(cutmix, "cutmix");
  add(cutout, "cutout");
  add(sosr, "sosr");
  add(label_smoothing, "label_smoothing");
  add(confidence_penalty, "confidence_penalty");
  return out.empty() ? "none" : out;
}

Regularizers Regularizers::parse(std::string_view text) {
  Regularizers r;
  const std::string all = trim(text);
  if (all == "none") return r;
  std::istringstream in(all);
  std::string part;
  while (std::getline(in, part, '+')) {
    part = trim(part);
    bool* flag = nullptr;
    if (part == "sosr") flag = &r.sosr;
    else if (part == "label_smoothing") flag = &r.label_smoothing;
    else if (part == "confidence_penalty") flag = &r.confidence_penalty;
    else if (part == "cutmix") flag = &r.cutmix;
    else if (part == "cutout") flag = &r.cutout;
    else throw ConfigError("unknown regularizer component '" + part + "'");
    if (*flag) throw ConfigError("regularizer component '" + part + "' repeated");
    *flag = true;
  }
  if (r.label_smoothing && r.confidence_penalty) {
    throw ConfigError("label_smoothing and confidence_penalty cannot be combined");
  }
  if (r.cutmix && (r.label_smoothing || r.confidence_penalty)) {
    throw ConfigError("cutmix combines only with sosr or cutout");
  }
  return r;
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  try {
    LrSchedule{lr, lr_milestones, lr_factor}.validate();
    if (regularizer.sosr) sosr.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (regularizer.sosr && sosr.schedule.kind != ScheduleKind::constant && epochs < 2) {
    throw ConfigError("a beta schedule needs at least two epochs");
  }
  if (regularizer.label_smoothing && !(ls_epsilon >= 0.0 && ls_epsilon < 1.0)) {
    throw ConfigError("label_smoothing.epsilon must lie in [0,1)");
  }
  if (regularizer.confidence_penalty && cp_lambda < 0.0) {
    throw ConfigError("confidence_penalty.lambda must be nonnegative");
  }
  if (regularizer.cutmix && !(cutmix_alpha > 0.0)) throw ConfigError("cutmix.alpha must be positive");
  if (regularizer.cutout && cutout_size == 0) throw ConfigError("cutout.size must be positive");
  if (augment_flip < 0.0 || augment_flip > 1.0) throw ConfigError("augment.flip must lie in [0,1]");
  for (double t : census_thresholds) {
    if (!(t >= 0.0 && t < 1.0)) throw ConfigError("census thresholds must lie in [0,1)");
  }
  if (data.kind == DatasetKind::blobs) {
    if (data.blobs.num_classes < 2 || data.blobs.per_class < 1 || data.blobs.dim < 1) {
      throw ConfigError("blob sizes must be positive with at least two classes");
    }
    if (!(data.blobs.separation > 0.0) || !(data.blobs.noise_sigma > 0.0)) {
      throw ConfigError("blobs.separation and blobs.noise must be positive");
    }
    if (data.test_per_class < 0) throw ConfigError("blobs.test_per_class must be nonnegative");
    if (regularizer.cutmix || regularizer.cutout || augment_pad > 0 || augment_flip > 0.0) {
      throw ConfigError("image augmentation and cutmix/cutout need an image dataset");
    }
  } else if (data.train_path.empty()) {
    throw ConfigError("data.train_path is required for CIFAR datasets");
  }
  if (!(data.imbalance_rho >= 1.0)) throw ConfigError("data.imbalance_rho must be >= 1");
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

}  // namespace sosr
