#ifndef BSLAB_ENV_OBSERVE_HPP_
#define BSLAB_ENV_OBSERVE_HPP_

#include <vector>

#include "bslab/env/world.hpp"

namespace bslab::env {

using FeatureVector = std::vector<double>;

// Per-agent featurization, in order:
//   own:      position x,y / (dim-1) (2), orientation one-hot (4), held one-hot (4)
//   partner:  position (2), orientation (4), held (4), delta to partner (2)
//   per pot:  onions/3, cooking, ready, timer/cook_time, delta to pot (2)
//   static:   delta to nearest onion pile, dish pile, delivery zone (6)
//   time:     steps remaining / episode_length (1)
// Deltas are divided by (width-1, height-1), so they lie in [-1, 1].
FeatureVector observe(const WorldState& state, int agent);

// 29 + 6 * pot_count.
int observation_size(const Layout& layout);

}  // namespace bslab::env

#endif  // BSLAB_ENV_OBSERVE_HPP_
