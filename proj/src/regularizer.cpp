#include "sosr/regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sosr {
namespace {

void require_logits(const Matrix& logits) {
  if (logits.rows() == 0) throw InvalidInput("logit batch is empty");
  if (logits.cols() < 2) throw InvalidInput("logit batch needs at least two classes");
  for (double v : logits.data()) {
    if (!std::isfinite(v)) throw InvalidInput("logit batch contains a non-finite entry");
  }
}

void require_batch(std::size_t got, std::size_t rows, const char* what) {
  if (got != rows) {
    throw InvalidInput(std::string(what) + " count " + std::to_string(got) +
                       " does not match batch size " + std::to_string(rows));
  }
}

void require_label(int label, std::size_t k) {
  if (label < 0 || static_cast<std::size_t>(label) >= k) {
    throw InvalidInput("class index " + std::to_string(label) + " outside [0," +
                       std::to_string(k) + ")");
  }
}

// Row log-sum-exp with max subtraction.
double log_sum_exp(std::span<const double> row) {
  const double hi = *std::max_element(row.begin(), row.end());
  double acc = 0.0;
  for (double v : row) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

// -log p_k, clamped at -log(kProbFloor).
double neg_log_prob(std::span<const double> row, double lse, std::size_t k) {
  static const double cap = -std::log(kProbFloor);
  return std::min(lse - row[k], cap);
}

// Dense target distribution for one sample.
std::vector<double> target_distribution(const Target& target, std::size_t k) {
  std::vector<double> q(k, 0.0);
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, HardLabel>) {
          require_label(t.label, k);
          q[t.label] = 1.0;
        } else if constexpr (std::is_same_v<T, SmoothedTarget>) {
          if (t.q.size() != k) throw InvalidInput("smoothed target length does not match K");
          double sum = 0.0;
          for (double v : t.q) {
            if (!(v >= 0.0)) throw InvalidInput("smoothed target has a negative entry");
            sum += v;
          }
          if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("smoothed target does not sum to 1");
          q = t.q;
        } else {
          require_label(t.first, k);
          require_label(t.second, k);
          if (!(t.lambda >= 0.0 && t.lambda <= 1.0)) {
            throw InvalidInput("pair mix coefficient outside [0,1]");
          }
          q[t.first] += t.lambda;
          q[t.second] += 1.0 - t.lambda;
        }
      },
      target);
  return q;
}

void smooth_row_keep(std::span<const double> src, std::span<double> dst,
                     std::span<const std::size_t> keep) {
  const std::size_t k = src.size();
  const std::size_t rest = k - keep.size();
  if (rest == 0) return;
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (std::find(keep.begin(), keep.end(), j) == keep.end()) sum += src[j];
  }
  const double mean = sum / static_cast<double>(rest);
  for (std::size_t j = 0; j < k; ++j) {
    dst[j] = std::find(keep.begin(), keep.end(), j) == keep.end() ? mean : src[j];
  }
}

// Max-keeping smoothing. The mean of the non-max entries is accumulated
// directly rather than as (sum - max) / (K - 1): identical in exact
// arithmetic, but with K = 2 it reproduces the other logit bit for bit.
void smooth_row_max(std::span<const double> src, std::span<double> dst) {
  const std::size_t keep[] = {argmax(src)};
  smooth_row_keep(src, dst, keep);
}

}  // namespace

std::vector<Target> hard_targets(std::span<const int> labels) {
  std::vector<Target> out;
  out.reserve(labels.size());
  for (int y : labels) out.emplace_back(HardLabel{y});
  return out;
}

void SosrConfig::validate() const {
  if (!(threshold_p > 0.0 && threshold_p <= 1.0)) {
    throw InvalidInput("threshold_p must lie in (0,1]");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be nonnegative");
  if (variant.kind == VariantKind::random_sampled &&
      !(variant.fraction > 0.0 && variant.fraction <= 1.0)) {
    throw InvalidInput("random-sampled fraction must lie in (0,1]");
  }
  if (schedule.kind == ScheduleKind::warm_up && schedule.peak_epoch < 0) {
    throw InvalidInput("warm-up peak epoch must be nonnegative");
  }
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Matrix softmax(const Matrix& logits) {
  require_logits(logits);
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto out = probs.row(i);
    const double hi = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - hi);
      sum += out[j];
    }
    for (double& v : out) v /= sum;
  }
  return probs;
}

LossAndGrad cross_entropy(const Matrix& logits, std::span<const Target> targets) {
  require_logits(logits);
  require_batch(targets.size(), logits.rows(), "target");
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  const double inv_m = 1.0 / static_cast<double>(m);
  const Matrix probs = softmax(logits);
  LossAndGrad out{0.0, Matrix(m, k)};
  for (std::size_t i = 0; i < m; ++i) {
    const auto q = target_distribution(targets[i], k);
    const auto row = logits.row(i);
    const double lse = log_sum_exp(row);
    double sample = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (q[j] != 0.0) sample += q[j] * neg_log_prob(row, lse, j);
      out.grad(i, j) = (probs(i, j) - q[j]) * inv_m;
    }
    out.loss += sample;
  }
  out.loss *= inv_m;
  return out;
}

Mask detect_overconfident(const Matrix& logits, std::span<const int> labels, double threshold_p) {
  require_logits(logits);
  require_batch(labels.size(), logits.rows(), "label");
  const Matrix probs = softmax(logits);
  Mask mask(logits.rows(), false);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    require_label(labels[i], logits.cols());
    const std::size_t top = argmax(logits.row(i));
    mask[i] = static_cast<int>(top) == labels[i] && probs(i, top) > threshold_p;
  }
  return mask;
}

DesiredOutput build_desired_output(const Matrix& logits, const Mask& mask) {
  if (logits.cols() < 2) throw InvalidInput("desired output needs K >= 2");
  require_batch(mask.size(), logits.rows(), "mask");
  DesiredOutput out{logits, mask};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (mask[i]) smooth_row_max(logits.row(i), out.values.row(i));
  }
  return out;
}

Mask detect_overconfident_cutmix(const Matrix& logits, std::span<const PairTarget> targets,
                                 double threshold_p) {
  require_logits(logits);
  require_batch(targets.size(), logits.rows(), "pair target");
  const Matrix probs = softmax(logits);
  Mask mask(logits.rows(), false);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto& t = targets[i];
    require_label(t.first, logits.cols());
    require_label(t.second, logits.cols());
    double mass = probs(i, t.first);
    if (t.second != t.first) mass += probs(i, t.second);
    mask[i] = mass > threshold_p;
  }
  return mask;
}

DesiredOutput build_desired_output_cutmix(const Matrix& logits, const Mask& mask,
                                          std::span<const PairTarget> targets) {
  require_batch(mask.size(), logits.rows(), "mask");
  require_batch(targets.size(), logits.rows(), "pair target");
  DesiredOutput out{logits, mask};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    const auto& t = targets[i];
    require_label(t.first, logits.cols());
    require_label(t.second, logits.cols());
    if (t.first == t.second) {
      // Single effective label: keep it, average the other K-1.
      const std::size_t keep[] = {static_cast<std::size_t>(t.first)};
      smooth_row_keep(logits.row(i), out.values.row(i), keep);
    } else {
      const std::size_t keep[] = {static_cast<std::size_t>(t.first),
                                  static_cast<std::size_t>(t.second)};
      smooth_row_keep(logits.row(i), out.values.row(i), keep);
    }
  }
  return out;
}

SmoothedTarget label_smoothing_targets(int label, double epsilon, int num_classes) {
  if (num_classes < 2) throw InvalidInput("label smoothing needs K >= 2");
  require_label(label, static_cast<std::size_t>(num_classes));
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidInput("epsilon must lie in [0,1)");
  const double off = epsilon / num_classes;
  SmoothedTarget t{std::vector<double>(num_classes, off)};
  t.q[label] = 1.0 - epsilon + off;
  return t;
}

LossAndGrad confidence_penalty_loss(const Matrix& logits, std::span<const int> labels,
                                    double lambda_cp) {
  if (!(lambda_cp >= 0.0)) throw InvalidInput("confidence penalty weight must be nonnegative");
  const auto targets = hard_targets(labels);
  LossAndGrad out = cross_entropy(logits, targets);
  const Matrix probs = softmax(logits);
  const std::size_t m = logits.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  double entropy_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = logits.row(i);
    const double lse = log_sum_exp(row);
    // log p computed from logits so tiny probabilities stay exact.
    double h = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) h -= probs(i, j) * (row[j] - lse);
    entropy_sum += h;
    // dH/do_j = -p_j (log p_j + H)
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double dh = -probs(i, j) * ((row[j] - lse) + h);
      out.grad(i, j) -= lambda_cp * dh * inv_m;
    }
  }
  out.loss -= lambda_cp * entropy_sum * inv_m;
  return out;
}

double beta_at_epoch(const BetaSchedule& schedule, int epoch, int total_epochs, double base_beta) {
  if (total_epochs < 2) throw InvalidInput("beta schedule needs at least two epochs");
  if (epoch < 0 || epoch >= total_epochs) throw InvalidInput("epoch outside [0, total_epochs)");
  const double last = static_cast<double>(total_epochs - 1);
  const double e = static_cast<double>(epoch);
  switch (schedule.kind) {
    case ScheduleKind::constant:
      return base_beta;
    case ScheduleKind::linear_up:
      return base_beta * e / last;
    case ScheduleKind::linear_down:
      return base_beta * (1.0 - e / last);
    case ScheduleKind::warm_up: {
      const double peak = std::clamp(static_cast<double>(schedule.peak_epoch), 0.0, last);
      if (e <= peak) return peak == 0.0 ? base_beta : base_beta * e / peak;
      return base_beta * (last - e) / (last - peak);
    }
  }
  return base_beta;
}

Mask apply_variant_mask(const SosrVariant& variant, const Mask& base_mask, Rng& rng) {
  switch (variant.kind) {
    case VariantKind::standard:
      return base_mask;
    case VariantKind::complete:
      return Mask(base_mask.size(), true);
    case VariantKind::random_sampled: {
      std::bernoulli_distribution draw(variant.fraction);
      Mask out(base_mask.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = draw(rng);
      return out;
    }
  }
  return base_mask;
}

DesiredOutput sosr_desired_output(const Matrix& logits, std::span<const Target> targets,
                                  const SosrConfig& config, Rng* rng) {
  config.validate();
  require_logits(logits);
  require_batch(targets.size(), logits.rows(), "target");
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  const Matrix probs = softmax(logits);

  Mask base(m, false);
  std::vector<const PairTarget*> pairs(m, nullptr);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t top = argmax(logits.row(i));
    const double p_top = probs(i, top);
    if (const auto* hard = std::get_if<HardLabel>(&targets[i])) {
      require_label(hard->label, k);
      base[i] = static_cast<int>(top) == hard->label && p_top > config.threshold_p;
    } else if (const auto* soft = std::get_if<SmoothedTarget>(&targets[i])) {
      if (soft->q.size() != k) throw InvalidInput("smoothed target length does not match K");
      base[i] = top == argmax(soft->q) && p_top > config.threshold_p;
    } else {
      const auto& pair = std::get<PairTarget>(targets[i]);
      require_label(pair.first, k);
      require_label(pair.second, k);
      pairs[i] = &pair;
      double mass = probs(i, pair.first);
      if (pair.second != pair.first) mass += probs(i, pair.second);
      base[i] = mass > config.threshold_p;
    }
  }

  Mask mask = base;
  if (config.variant.kind == VariantKind::random_sampled) {
    if (rng == nullptr) throw InvalidInput("random-sampled SOSR needs a random generator");
    mask = apply_variant_mask(config.variant, base, *rng);
  } else if (config.variant.kind == VariantKind::complete) {
    Rng unused;
    mask = apply_variant_mask(config.variant, base, unused);
  }

  DesiredOutput out{logits, mask};
  for (std::size_t i = 0; i < m; ++i) {
    if (!mask[i]) continue;
    if (pairs[i] == nullptr) {
      smooth_row_max(logits.row(i), out.values.row(i));
    } else if (pairs[i]->first == pairs[i]->second) {
      const std::size_t keep[] = {static_cast<std::size_t>(pairs[i]->first)};
      smooth_row_keep(logits.row(i), out.values.row(i), keep);
    } else {
      const std::size_t keep[] = {static_cast<std::size_t>(pairs[i]->first),
                                  static_cast<std::size_t>(pairs[i]->second)};
      smooth_row_keep(logits.row(i), out.values.row(i), keep);
    }
  }
  return out;
}

SosrTerm sosr_term(const Matrix& logits, std::span<const Target> targets, const SosrConfig& config,
                   double effective_beta, Rng* rng) {
  if (!(effective_beta >= 0.0)) throw InvalidInput("effective beta must be nonnegative");
  SosrTerm term{0.0, Matrix(logits.rows(), logits.cols()),
                sosr_desired_output(logits, targets, config, rng)};
  const double scale = 1.0 / static_cast<double>(logits.rows() * logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!term.desired.modified[i]) continue;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const double diff = logits(i, j) - term.desired.values(i, j);
      term.mse += diff * diff;
      term.grad(i, j) = effective_beta * 2.0 * scale * diff;
    }
  }
  term.mse *= scale;
  return term;
}

LossResult sosr_loss(const Matrix& logits, std::span<const Target> targets,
                     const SosrConfig& config, double effective_beta, Rng* rng) {
  LossAndGrad ce = cross_entropy(logits, targets);
  SosrTerm term = sosr_term(logits, targets, config, effective_beta, rng);
  LossResult out;
  out.ce_part = ce.loss;
  out.sosr_part = term.mse;
  out.total = ce.loss + effective_beta * term.mse;
  out.grad_logits = std::move(ce.grad);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!term.desired.modified[i]) continue;
    for (std::size_t j = 0; j < logits.cols(); ++j) out.grad_logits(i, j) += term.grad(i, j);
  }
  out.flagged = std::move(term.desired.modified);
  return out;
}

}  // namespace sosr
