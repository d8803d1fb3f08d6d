#pragma once

// Central finite differences, used as the independent oracle for every
// analytic gradient in the library.

#include <functional>
#include <span>
#include <vector>

#include "sosr/model.hpp"

namespace sosr {

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate i.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, double h);

/// Finite-difference gradient of loss_fn(model.forward(input)) with respect
/// to every parameter, in parameters() order. Parameters are restored
/// before returning.
std::vector<Tensor<double>> finite_diff_grad(Model<double>& model,
                                             const std::function<double(const Matrix&)>& loss_fn,
                                             const Tensor<double>& input, double h);

/// max |a - b| / max(|a|, |b|, floor) over all entries.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8);

}  // namespace sosr
