#ifndef BSLAB_TRAIN_PPO_HPP_
#define BSLAB_TRAIN_PPO_HPP_

#include <vector>

#include "bslab/common/rng.hpp"
#include "bslab/policy/network.hpp"
#include "bslab/train/adam.hpp"
#include "bslab/train/config.hpp"
#include "bslab/train/gae.hpp"
#include "bslab/train/rollout.hpp"

namespace bslab::train {

// GAE over every stream of the batch, flattened in batch row order.
GaeResult batch_targets(const TrajectoryBatch& batch, double gamma, double lambda);

// Mean 0, std 1 (population std, epsilon 1e-8).
std::vector<double> normalize(const std::vector<double>& xs);

struct UpdateStats {
  double policy_loss = 0.0;  // means over all gradient steps
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;  // before clipping
  double first_clip_fraction = 0.0;  // epoch 0, minibatch 0
  double first_approx_kl = 0.0;
  int gradient_steps = 0;
};

struct UpdateResult {
  policy::PolicyParameters params;
  AdamState optimizer;
  UpdateStats stats;
};

// epochs x minibatches Adam steps on the clipped-surrogate loss. Minibatches
// are drawn from `shuffle` over samples (feedforward) or over recurrent
// segments. Throws NumericalError on a non-finite loss or parameter.
UpdateResult ppo_update(const policy::PolicyParameters& params, const AdamState& optimizer,
                        const TrajectoryBatch& batch, const TrainConfig& config, RngStream& shuffle);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_PPO_HPP_
