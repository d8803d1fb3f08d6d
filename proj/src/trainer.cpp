#include "sosr/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "sosr/augment.hpp"
#include "sosr/optimizer.hpp"

namespace sosr {
namespace {

constexpr std::size_t kEvalChunk = 512;

// Independent generator per purpose so that changing the regularizer never
// shifts the data order or augmentation draws.
enum class Stream : std::uint32_t { init = 1, shuffle = 2, augment = 3, regularizer = 4 };

Rng stream_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

}  // namespace

TrainData load_data(const DatasetRecipe& recipe) {
  TrainData out;
  if (recipe.kind == DatasetKind::blobs) {
    BlobSpec spec = recipe.blobs;
    spec.per_class += recipe.test_per_class;
    spec.seed = recipe.seed;
    auto [train, val] = split_per_class(gaussian_blobs(spec), recipe.test_per_class, recipe.seed + 1);
    out.train = std::move(train);
    out.validation = std::move(val);
  } else {
    const auto layout = recipe.kind == DatasetKind::cifar100 ? CifarLayout::cifar100
                                                             : CifarLayout::cifar10;
    out.train = load_cifar_binary(recipe.train_path, layout);
    if (!recipe.test_path.empty()) {
      out.validation = load_cifar_binary(recipe.test_path, layout);
    } else {
      out.validation.feature_shape = out.train.feature_shape;
      out.validation.num_classes = out.train.num_classes;
    }
  }
  if (recipe.subset_per_class > 0) {
    out.train = subset_per_class(out.train, recipe.subset_per_class, recipe.seed + 2);
  }
  if (recipe.imbalance_rho > 1.0) {
    out.train = make_long_tailed(out.train, recipe.imbalance_rho, recipe.seed + 3).first;
  }
  if (recipe.normalize) {
    const auto stats = channel_stats(out.train);
    normalize_channels(out.train, stats);
    normalize_channels(out.validation, stats);
  }
  return out;
}

EvalResult evaluate_logits(const Matrix& logits, std::span<const int> labels,
                           std::span<const double> thresholds) {
  if (labels.size() != logits.rows()) throw InvalidInput("label count does not match logits");
  EvalResult out;
  out.census.assign(thresholds.size(), 0);
  if (logits.rows() == 0) return out;
  const Matrix probs = softmax(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const std::size_t top = argmax(logits.row(i));
    if (static_cast<int>(top) != labels[i]) continue;
    ++correct;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      if (probs(i, top) > thresholds[t]) ++out.census[t];
    }
  }
  out.correct = correct;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(logits.rows());
  out.mean_ce = cross_entropy(logits, hard_targets(labels)).loss;
  return out;
}

EvalResult evaluate(const Model<float>& model, const LabeledDataset& data,
                    std::span<const double> thresholds) {
  EvalResult out;
  out.census.assign(thresholds.size(), 0);
  if (data.size() == 0) return out;
  std::size_t correct = 0;
  double ce_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t end = std::min(data.size(), start + kEvalChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix logits = to_matrix(model.infer(data.batch(idx)));
    const std::span<const int> labels(data.labels.data() + start, end - start);
    const EvalResult part = evaluate_logits(logits, labels, thresholds);
    correct += part.correct;
    ce_sum += part.mean_ce * static_cast<double>(end - start);
    for (std::size_t t = 0; t < thresholds.size(); ++t) out.census[t] += part.census[t];
  }
  out.correct = correct;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  out.mean_ce = ce_sum / static_cast<double>(data.size());
  return out;
}

std::vector<std::size_t> census_overconfident(const Model<float>& model,
                                              const LabeledDataset& data,
                                              std::span<const double> thresholds) {
  for (double t : thresholds) {
    if (!(t >= 0.0 && t < 1.0)) throw InvalidInput("census thresholds must lie in [0,1)");
  }
  return evaluate(model, data, thresholds).census;
}

TrainResult train_run(const RunConfig& config, std::uint64_t seed, const EpochCallback& on_epoch) {
  config.validate();
  return train_run(config, load_data(config.data), seed, on_epoch);
}

TrainResult train_run(const RunConfig& config, const TrainData& data, std::uint64_t seed,
                      const EpochCallback& on_epoch) {
  config.validate();
  const LabeledDataset& train = data.train;
  if (train.size() == 0) throw ConfigError("training set is empty");

  std::vector<LayerSpec> layers;
  try {
    layers = parse_layers(config.model, train.feature_shape);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  Rng init_rng = stream_rng(seed, Stream::init);
  TrainResult result{Model<float>::build(layers, train.feature_shape, init_rng()), {}};
  Model<float>& model = result.model;
  if (model.num_outputs() != static_cast<std::size_t>(train.num_classes)) {
    throw ConfigError("model has " + std::to_string(model.num_outputs()) + " outputs but the dataset has " +
                      std::to_string(train.num_classes) + " classes");
  }

  const bool image = train.feature_shape.size() == 3;
  if (!image && (config.regularizer.cutmix || config.regularizer.cutout || config.augment_pad > 0 ||
                 config.augment_flip > 0.0)) {
    throw ConfigError("image augmentation and cutmix/cutout need an image dataset");
  }
  const ImageShape img = image ? ImageShape::from(train.feature_shape) : ImageShape{};
  const bool augment = image && (config.augment_pad > 0 || config.augment_flip > 0.0);

  Rng shuffle_rng = stream_rng(seed, Stream::shuffle);
  Rng augment_rng = stream_rng(seed, Stream::augment);
  Rng reg_rng = stream_rng(seed, Stream::regularizer);

  auto opt = OptimizerState<float>::for_model(model, config.lr, config.momentum, config.weight_decay);
  const LrSchedule schedule{config.lr, config.lr_milestones, config.lr_factor};
  const auto k = static_cast<int>(train.num_classes);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    opt.lr = lr_at_epoch(schedule, epoch);

    double beta = 0.0;
    if (config.regularizer.sosr) {
      beta = config.epochs >= 2
                 ? beta_at_epoch(config.sosr.schedule, epoch, config.epochs, config.sosr.beta)
                 : config.sosr.beta;
    }

    double loss_sum = 0.0, ce_sum = 0.0, sosr_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const std::size_t m = idx.size();
      Tensor<float> x = train.batch(idx);
      std::vector<int> labels(m);
      for (std::size_t i = 0; i < m; ++i) labels[i] = train.labels[idx[i]];

      if (augment) {
        for (std::size_t i = 0; i < m; ++i) {
          const std::span<const float> src(x.data() + i * img.size(), img.size());
          const auto out = augment_standard(src, img, config.augment_pad, img.height,
                                            config.augment_flip, augment_rng);
          std::copy(out.begin(), out.end(), x.data() + i * img.size());
        }
      }
      if (config.regularizer.cutout) {
        for (std::size_t i = 0; i < m; ++i) {
          cutout({x.data() + i * img.size(), img.size()}, img, config.cutout_size, reg_rng);
        }
      }

      std::vector<Target> targets;
      if (config.regularizer.cutmix && m >= 2) {
        CutMixBatch mixed = cutmix_mix(x, labels, config.cutmix_alpha, reg_rng);
        x = std::move(mixed.mixed_inputs);
        for (const auto& p : mixed.pairs) targets.emplace_back(p);
      } else if (config.regularizer.label_smoothing) {
        for (int y : labels) targets.emplace_back(label_smoothing_targets(y, config.ls_epsilon, k));
      } else {
        targets = hard_targets(labels);
      }

      const Matrix logits = to_matrix(model.forward(x, true));
      const auto fail = [&](const char* what) {
        return NumericError(std::string(what) + " at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_index));
      };
      for (double v : logits.data()) {
        if (!std::isfinite(v)) throw fail("non-finite logits");
      }

      LossAndGrad base = config.regularizer.confidence_penalty
                             ? confidence_penalty_loss(logits, labels, config.cp_lambda)
                             : cross_entropy(logits, targets);
      double total = base.loss;
      double sosr_part = 0.0;
      if (config.regularizer.sosr && beta > 0.0) {
        const SosrTerm term = sosr_term(logits, targets, config.sosr, beta, &reg_rng);
        sosr_part = term.mse;
        total += beta * term.mse;
        for (std::size_t i = 0; i < m; ++i) {
          if (!term.desired.modified[i]) continue;
          for (std::size_t j = 0; j < logits.cols(); ++j) base.grad(i, j) += term.grad(i, j);
        }
      }
      if (!std::isfinite(total)) throw fail("non-finite loss");

      model.backward(base.grad);
      sgd_step(model, opt);
      for (const auto& param : model.parameters()) {
        for (float v : param.value.values()) {
          if (!std::isfinite(v)) throw fail("non-finite parameters after the update");
        }
      }

      const auto w = static_cast<double>(m);
      loss_sum += total * w;
      ce_sum += base.loss * w;
      sosr_sum += sosr_part * w;
    }

    EpochMetrics row;
    row.epoch = epoch;
    const auto n = static_cast<double>(train.size());
    row.train_loss = loss_sum / n;
    row.ce_part = ce_sum / n;
    row.sosr_part = sosr_sum / n;
    row.effective_beta = beta;
    const EvalResult train_eval = evaluate(model, train, config.census_thresholds);
    row.train_acc = train_eval.accuracy;
    row.census = train_eval.census;
    row.val_acc = evaluate(model, data.validation).accuracy;
    if (config.record_wall_time) {
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    result.metrics.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

std::vector<SweepRow> sweep(const RunConfig& config, SweepAxis axis, std::span<const double> values,
                            unsigned threads) {
  if (!config.regularizer.sosr) throw ConfigError("sweep needs a regularizer that includes sosr");
  if (config.seeds.empty()) throw ConfigError("sweep needs at least one seed");
  config.validate();
  const TrainData data = load_data(config.data);

  struct Task {
    std::size_t row;
    std::size_t seed_index;
  };
  std::vector<Task> tasks;
  std::vector<SweepRow> rows(values.size());
  std::vector<RunConfig> configs;
  for (std::size_t r = 0; r < values.size(); ++r) {
    RunConfig c = config;
    if (axis == SweepAxis::threshold_p) c.sosr.threshold_p = values[r];
    else c.sosr.beta = values[r];
    c.validate();
    configs.push_back(c);
    rows[r].value = values[r];
    rows[r].per_seed.assign(config.seeds.size(), 0.0);
    for (std::size_t s = 0; s < config.seeds.size(); ++s) tasks.push_back({r, s});
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      try {
        const auto& task = tasks[t];
        const auto run = train_run(configs[task.row], data, config.seeds[task.seed_index]);
        rows[task.row].per_seed[task.seed_index] = run.metrics.back().val_acc;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, tasks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& row : rows) {
    const double n = static_cast<double>(row.per_seed.size());
    row.mean_val_acc = std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row.per_seed) var += (v - row.mean_val_acc) * (v - row.mean_val_acc);
    row.std_val_acc = row.per_seed.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  }
  return rows;
}

}  // namespace sosr
