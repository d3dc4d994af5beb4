#pragma once

#include <vector>

#include "commgate/tensor.hpp"

namespace commgate {

/// RMSProp state over an ordered parameter list. `v` holds the per-parameter
/// squared-gradient running averages in the same order.
struct OptimizerState {
  double alpha = 0.99;
  double lr = 0.001;
  double eps = 1e-8;
  std::vector<std::vector<double>> v;

  void attach(const std::vector<TensorPtr>& params);
};

/// v <- alpha*v + (1-alpha)*g^2; theta <- theta - lr*g/(sqrt(v)+eps).
/// Grads are zeroed afterwards. Non-finite updates raise DivergenceError.
void rmsprop_update(const std::vector<TensorPtr>& params, OptimizerState& opt);

/// Global L2 norm of all grads.
double grad_norm(const std::vector<TensorPtr>& params);

/// Rescales grads so the global norm does not exceed max_norm; returns the
/// pre-clip norm.
double clip_grad_norm(const std::vector<TensorPtr>& params, double max_norm);

/// Max over parameter coordinates of the relative error between the analytic
/// gradients already stored in param->grad and central finite differences of
/// `f`. Relative error uses max(1e-8, |analytic| + |numeric|) as denominator.
double finite_diff_check(const std::function<double()>& f,
                         const std::vector<TensorPtr>& params, double step);

}  // namespace commgate
