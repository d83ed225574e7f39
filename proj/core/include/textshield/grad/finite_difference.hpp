#pragma once

#include <functional>

#include "textshield/grad/tensor.hpp"

namespace textshield::grad {

using ScalarFunction = std::function<double(const Tensor&)>;

// Central-difference gradient estimate, (f(x + h e_i) - f(x - h e_i)) / 2h
// per component. Throws NumericError on a non-finite function value.
Tensor finite_difference(const ScalarFunction& f, const Tensor& point,
                         double h = 1e-5);

}  // namespace textshield::grad
