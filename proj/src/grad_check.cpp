#include "spikedec/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "spikedec/error.hpp"

namespace spikedec {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw EvalError("grad_check: function value is not finite");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& analytic, const Tensor& x, double eps) {
  require_same_shape(analytic, x, "grad_check");
  checked(f(x));
  Tensor probe = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = checked(f(probe));
    probe[i] = orig - eps;
    const double down = checked(f(probe));
    probe[i] = orig;
    // Divide by the step actually taken: orig +- eps is rounded, and for
    // |orig| near 1 that rounding alone is ~1e-10 of the quotient.
    const double fd = (up - down) / ((orig + eps) - (orig - eps));
    const double an = analytic[i];
    const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

double grad_check(const ValueAndGradFn& f, const Tensor& x, double eps) {
  const auto [value, grad] = f(x);
  checked(value);
  return grad_check([&f](const Tensor& t) { return f(t).first; }, grad, x, eps);
}

}  // namespace spikedec
