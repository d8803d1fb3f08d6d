#pragma once

// Batched loss math on logits: softmax, cross-entropy, label smoothing,
// confidence penalty and the selective output smoothing (SOSR) term.
//
// Every function here is a pure function of its arguments. The only state
// is an explicitly passed random generator, used by the random-sampled
// variant.

#include <cstddef>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "sosr/matrix.hpp"

namespace sosr {

using Rng = std::mt19937_64;
using Mask = std::vector<bool>;

/// Underflow floor applied to probabilities before taking a log.
inline constexpr double kProbFloor = 1e-12;

struct HardLabel {
  int label = 0;
};

/// Soft target distribution over K classes.
struct SmoothedTarget {
  std::vector<double> q;
};

/// Two-label target produced by CutMix: weight `lambda` on `first`,
/// `1 - lambda` on `second`.
struct PairTarget {
  int first = 0;
  int second = 0;
  double lambda = 1.0;
};

using Target = std::variant<HardLabel, SmoothedTarget, PairTarget>;

std::vector<Target> hard_targets(std::span<const int> labels);

// ---------------------------------------------------------------------------
// Configuration

enum class ScheduleKind { constant, linear_up, linear_down, warm_up };

struct BetaSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  int peak_epoch = 0;  // warm_up only
};

enum class VariantKind { standard, complete, random_sampled };

struct SosrVariant {
  VariantKind kind = VariantKind::standard;
  double fraction = 0.1;  // random_sampled only
};

struct SosrConfig {
  double threshold_p = 0.99;
  double beta = 1.0;
  SosrVariant variant{};
  BetaSchedule schedule{};

  /// Throws InvalidInput when a field is out of range.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Results

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

/// Constructed target for the MSE term. `values` equals the input logits on
/// every row whose `modified` flag is false.
struct DesiredOutput {
  Matrix values;
  Mask modified;
};

struct SosrTerm {
  /// (1/MK) * sum (desired - logits)^2, before weighting by beta.
  double mse = 0.0;
  /// Gradient of beta * mse with respect to the logits.
  Matrix grad;
  DesiredOutput desired;
};

struct LossResult {
  double total = 0.0;
  double ce_part = 0.0;
  double sosr_part = 0.0;
  Matrix grad_logits;
  Mask flagged;
};

// ---------------------------------------------------------------------------
// Operations

/// Row-wise softmax with max subtraction. Throws InvalidInput on
/// non-finite entries or an empty batch.
Matrix softmax(const Matrix& logits);

/// Index of the first maximum entry.
std::size_t argmax(std::span<const double> row);

/// Mean cross-entropy over the batch and its gradient (p - q) / M.
/// Pair targets contribute lambda * CE(first) + (1 - lambda) * CE(second).
LossAndGrad cross_entropy(const Matrix& logits, std::span<const Target> targets);

/// Flags samples whose argmax equals the label with softmax probability
/// strictly above `threshold_p`.
Mask detect_overconfident(const Matrix& logits, std::span<const int> labels, double threshold_p);

/// Keeps each flagged row's max logit in place and replaces every other
/// entry by (row_sum - max) / (K - 1).
DesiredOutput build_desired_output(const Matrix& logits, const Mask& mask);

/// Flags samples whose probability mass on the two labels exceeds
/// `threshold_p`. A repeated label is counted once.
Mask detect_overconfident_cutmix(const Matrix& logits, std::span<const PairTarget> targets,
                                 double threshold_p);

/// Keeps both label logits of each flagged row and replaces the remaining
/// entries by their own mean.
DesiredOutput build_desired_output_cutmix(const Matrix& logits, const Mask& mask,
                                          std::span<const PairTarget> targets);

SmoothedTarget label_smoothing_targets(int label, double epsilon, int num_classes);

/// CE - lambda_cp * mean entropy(p), with analytic gradient.
LossAndGrad confidence_penalty_loss(const Matrix& logits, std::span<const int> labels,
                                    double lambda_cp);

double beta_at_epoch(const BetaSchedule& schedule, int epoch, int total_epochs, double base_beta);

Mask apply_variant_mask(const SosrVariant& variant, const Mask& base_mask, Rng& rng);

/// Detection plus desired-output construction for a mixed-target batch:
/// hard labels use the standard test, smoothed targets test against argmax
/// of q, pair targets use the two-label sum. The variant mask is applied
/// on top. Rows routed through the pair path keep both label logits.
DesiredOutput sosr_desired_output(const Matrix& logits, std::span<const Target> targets,
                                  const SosrConfig& config, Rng* rng);

/// The weighted MSE term alone, with the desired output treated as a
/// constant: grad = beta * 2/(MK) * (O - desired).
SosrTerm sosr_term(const Matrix& logits, std::span<const Target> targets, const SosrConfig& config,
                   double effective_beta, Rng* rng = nullptr);

/// Cross-entropy plus effective_beta times the SOSR term. `rng` is required
/// for the random-sampled variant only.
LossResult sosr_loss(const Matrix& logits, std::span<const Target> targets,
                     const SosrConfig& config, double effective_beta, Rng* rng = nullptr);

}  // namespace sosr
