#include "sosr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sosr {

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, double h) {
  if (!(h > 0.0)) throw InvalidInput("finite-difference step must be positive");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<Tensor<double>> finite_diff_grad(Model<double>& model,
                                             const std::function<double(const Matrix&)>& loss_fn,
                                             const Tensor<double>& input, double h) {
  if (!(h > 0.0)) throw InvalidInput("finite-difference step must be positive");
  std::vector<Tensor<double>> out;
  for (auto& param : model.parameters()) {
    Tensor<double> g(param.value.shape());
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double saved = param.value[i];
      param.value[i] = saved + h;
      const double up = loss_fn(to_matrix(model.infer(input)));
      param.value[i] = saved - h;
      const double down = loss_fn(to_matrix(model.infer(input)));
      param.value[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw InvalidInput("relative error on different lengths");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace sosr
