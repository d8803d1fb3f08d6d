#pragma once

#include <vector>

#include "sosr/model.hpp"

namespace sosr {

/// SGD with momentum and L2 weight decay:
///   g' = grad + weight_decay * param;  v = momentum * v + g';  param -= lr * v
template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> velocity;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;

  static OptimizerState for_model(const Model<T>& model, double lr, double momentum,
                                  double weight_decay);
};

template <typename T>
void sgd_step(Model<T>& model, OptimizerState<T>& opt);

/// Step decay: initial_lr * factor^(number of milestones <= epoch).
struct LrSchedule {
  double initial_lr = 0.1;
  std::vector<int> milestones;
  double factor = 0.1;

  void validate() const;
};

double lr_at_epoch(const LrSchedule& schedule, int epoch);

extern template struct OptimizerState<float>;
extern template struct OptimizerState<double>;
extern template void sgd_step<float>(Model<float>&, OptimizerState<float>&);
extern template void sgd_step<double>(Model<double>&, OptimizerState<double>&);

}  // namespace sosr
