#pragma once

#include <functional>

#include "dmn/tensor.hpp"

namespace dmn {

// Compares reverse-mode gradients against central differences, per element of
// every listed leaf. Returns the max relative error
// |a - n| / max(1e-3, |a| + |n|). The denominator floor matches the noise
// floor of central differences at the default eps: components smaller than
// the floor are compared absolutely, since |f(x+eps) - f(x-eps)| is rounding-
// dominated there. Double precision only.
inline Scalar grad_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                         Scalar eps = 1e-5) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.clear_grad();
  }
  Tensor y = f();
  check(y.size() == 1, "grad_check: function must return a scalar");
  if (!std::isfinite(y.val()))
    throw ContractViolation("grad_check: non-finite function value");
  y.backward();

  std::vector<std::vector<Scalar>> analytic;
  for (auto& leaf : leaves) analytic.push_back(leaf.grad());

  Scalar max_err = 0;
  NoGradGuard ng;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].data();
    for (size_t i = 0; i < vals.size(); ++i) {
      Scalar saved = vals[i];
      vals[i] = saved + eps;
      Scalar fp = f().val();
      vals[i] = saved - eps;
      Scalar fm = f().val();
      vals[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw ContractViolation("grad_check: non-finite value during finite differences");
      Scalar num = (fp - fm) / (2.0 * eps);
      Scalar ana = analytic[li][i];
      Scalar err = std::abs(ana - num) / std::max((Scalar)1e-3, std::abs(ana) + std::abs(num));
      if (err > max_err) max_err = err;
    }
  }
  for (auto& leaf : leaves) leaf.clear_grad();
  return max_err;
}

}  // namespace dmn
