#include "bslab/train/adam.hpp"

#include <cmath>

#include "bslab/common/error.hpp"

namespace bslab::train {

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamSettings& s) {
  if (grad.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ContractError("adam_step: size mismatch");
  }
  ++state.steps;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * grad[i];
    state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (double& g : grad) g *= k;
  }
  return norm;
}

}  // namespace bslab::train
