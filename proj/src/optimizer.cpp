#include "sosr/optimizer.hpp"

#include <cmath>

namespace sosr {

template <typename T>
OptimizerState<T> OptimizerState<T>::for_model(const Model<T>& model, double lr, double momentum,
                                               double weight_decay) {
  if (!(lr > 0.0)) throw InvalidInput("learning rate must be positive");
  OptimizerState state;
  state.lr = lr;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  for (const auto& p : model.parameters()) state.velocity.emplace_back(p.value.shape());
  return state;
}

template <typename T>
void sgd_step(Model<T>& model, OptimizerState<T>& opt) {
  auto& params = model.parameters();
  if (opt.velocity.size() != params.size()) {
    throw InvalidInput("optimizer state does not match model parameters");
  }
  const T lr = static_cast<T>(opt.lr);
  const T mom = static_cast<T>(opt.momentum);
  const T wd = static_cast<T>(opt.weight_decay);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p].value;
    const auto& grad = params[p].grad;
    auto& vel = opt.velocity[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = wd == T{0} ? grad[i] : grad[i] + wd * value[i];
      vel[i] = mom * vel[i] + g;
      if (lr != T{0}) value[i] -= lr * vel[i];
    }
  }
}

void LrSchedule::validate() const {
  if (!(initial_lr > 0.0)) throw InvalidInput("initial learning rate must be positive");
  if (!(factor > 0.0 && factor < 1.0)) throw InvalidInput("lr decay factor must lie in (0,1)");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw InvalidInput("lr milestones must be strictly increasing");
    }
  }
}

double lr_at_epoch(const LrSchedule& schedule, int epoch) {
  double lr = schedule.initial_lr;
  for (int m : schedule.milestones) {
    if (m <= epoch) lr *= schedule.factor;
  }
  return lr;
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void sgd_step<float>(Model<float>&, OptimizerState<float>&);
template void sgd_step<double>(Model<double>&, OptimizerState<double>&);

}  // namespace sosr
