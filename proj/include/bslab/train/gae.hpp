#ifndef BSLAB_TRAIN_GAE_HPP_
#define BSLAB_TRAIN_GAE_HPP_

#include <span>
#include <vector>

namespace bslab::train {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// One env-agent stream:
//   delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
//   A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
// where V_T is `bootstrap_value`. Returns are A + V.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const char> dones, double bootstrap_value, double gamma,
                      double lambda);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_GAE_HPP_
