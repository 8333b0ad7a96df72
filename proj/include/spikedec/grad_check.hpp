#pragma once

#include <functional>

#include "spikedec/tensor.hpp"

namespace spikedec {

using ScalarFn = std::function<double(const Tensor&)>;

/// Compares `analytic` against central finite differences of `f` around `x`.
/// Returns max_i |fd_i - an_i| / max(1, |fd_i|, |an_i|). Throws EvalError if f is non-finite.
double grad_check(const ScalarFn& f, const Tensor& analytic, const Tensor& x, double eps = 1e-6);

/// Same, with a function that returns both value and gradient.
using ValueAndGradFn = std::function<std::pair<double, Tensor>(const Tensor&)>;
double grad_check(const ValueAndGradFn& f, const Tensor& x, double eps = 1e-6);

}  // namespace spikedec
