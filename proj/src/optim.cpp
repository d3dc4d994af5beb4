#include "commgate/optim.hpp"

#include <cmath>

#include "commgate/errors.hpp"

namespace commgate {

void OptimizerState::attach(const std::vector<TensorPtr>& params) {
  v.clear();
  v.reserve(params.size());
  for (const auto& p : params) v.emplace_back(p->data.size(), 0.0);
}

void rmsprop_update(const std::vector<TensorPtr>& params, OptimizerState& opt) {
  if (opt.v.size() != params.size())
    throw ContractViolation("rmsprop_update: optimizer not attached to this parameter set");
  if (opt.lr <= 0.0) throw ConfigError("rmsprop_update: learning rate must be positive");
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    p.ensure_grad();
    std::vector<double>& vp = opt.v[pi];
    for (size_t i = 0; i < p.data.size(); ++i) {
      double g = p.grad[i];
      vp[i] = opt.alpha * vp[i] + (1.0 - opt.alpha) * g * g;
      double step = opt.lr * g / (std::sqrt(vp[i]) + opt.eps);
      double next = p.data[i] - step;
      if (!std::isfinite(next))
        throw DivergenceError("rmsprop_update: non-finite update in " + p.name);
      p.data[i] = next;
      p.grad[i] = 0.0;
    }
  }
}

double grad_norm(const std::vector<TensorPtr>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p->grad) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<TensorPtr>& params, double max_norm) {
  double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (const auto& p : params)
      for (double& g : p->grad) g *= scale;
  }
  return norm;
}

double finite_diff_check(const std::function<double()>& f,
                         const std::vector<TensorPtr>& params, double step) {
  if (step <= 0.0) throw ConfigError("finite_diff_check: step must be positive");
  double worst = 0.0;
  for (const auto& p : params) {
    p->ensure_grad();
    for (size_t i = 0; i < p->data.size(); ++i) {
      double saved = p->data[i];
      p->data[i] = saved + step;
      double up = f();
      p->data[i] = saved - step;
      double down = f();
      p->data[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      double analytic = p->grad[i];
      double rel = std::fabs(analytic - numeric) /
                   std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace commgate
