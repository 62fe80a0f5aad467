#ifndef BSLAB_TRAIN_ADAM_HPP_
#define BSLAB_TRAIN_ADAM_HPP_

#include <cstdint>
#include <span>
#include <vector>

namespace bslab::train {

struct AdamSettings {
  double lr = 0.0008;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t steps = 0;

  static AdamState zeros(std::size_t n) { return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected adaptive-moment step, in place.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const AdamSettings& settings);

// Scales grad so its L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_ADAM_HPP_
