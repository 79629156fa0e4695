#pragma once

#include <functional>
#include <span>

#include "quann/tensor.hpp"

namespace quann {

using ScalarFunction = std::function<double(const Tensor&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
// f must not keep references to its argument.
Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& x, double step);

// ||a - b||_2 / max(||a||_2, ||b||_2), 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace quann
