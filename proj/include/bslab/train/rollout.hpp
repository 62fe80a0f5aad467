#ifndef BSLAB_TRAIN_ROLLOUT_HPP_
#define BSLAB_TRAIN_ROLLOUT_HPP_

#include <array>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/common/rng.hpp"
#include "bslab/env/world.hpp"
#include "bslab/policy/network.hpp"
#include "bslab/shaping/behavior.hpp"
#include "bslab/train/config.hpp"
#include "bslab/train/episode.hpp"

namespace bslab::train {

// Experience for S = workers * envs * 2 streams of T steps each. Stream
// index s = (worker * envs_per_worker + env) * 2 + seat; per-step arrays are
// stream-major (row = s * T + t).
struct TrajectoryBatch {
  int streams = 0;
  int steps = 0;
  int segment_length = 0;  // 0 for feedforward batches

  policy::Matrix obs;    // augmented observations
  policy::Matrix omega;  // S*T x K
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;       // shaped r'
  std::vector<double> base_rewards;  // shared env reward
  std::vector<char> dones;
  std::vector<char> episode_start;
  std::vector<double> bootstrap;  // per stream, value of the post-rollout observation

  // Recurrent state at every segment start, row = s * segments + g.
  policy::Matrix segment_h;
  policy::Matrix segment_c;

  std::vector<EpisodeTally> finished;  // episodes completed during collection

  int rows() const { return streams * steps; }
  int segments() const { return segment_length > 0 ? steps / segment_length : 0; }
};

// One environment instance and everything that persists across rollouts.
struct EnvSlot {
  env::WorldState state;
  std::array<shaping::BehaviorWeights, 2> omega;
  std::array<policy::RecurrentState, 2> rstate;
  RngStream action_rng;
  std::array<RngStream, 2> omega_rng;
  EpisodeTally tally;
  bool fresh = true;  // next step starts an episode
};

// Test hook: replaces sampled actions while keeping log-probs and values
// from the network.
using ActionOverride = std::function<env::JointAction(int env_index, const env::WorldState&)>;

class RolloutWorker {
 public:
  RolloutWorker(env::LayoutPtr layout, shaping::BehaviorSpec spec, Mode mode,
                const policy::PolicyConfig& policy_config, int envs, std::uint64_t seed,
                int worker_index);

  // Exactly `steps` steps in every env. segment_length > 0 records recurrent
  // state every segment_length steps.
  TrajectoryBatch collect(const policy::PolicyParameters& params, int steps, int segment_length,
                          const ActionOverride& override_actions = {});

  const std::vector<EnvSlot>& slots() const { return slots_; }
  nlohmann::json to_json() const;
  void restore(const nlohmann::json& j);

 private:
  void begin_episode(EnvSlot& slot);

  env::LayoutPtr layout_;
  shaping::BehaviorSpec spec_;
  Mode mode_;
  policy::PolicyConfig policy_config_;
  std::vector<EnvSlot> slots_;
};

// Runs every worker (in parallel when more than one) and concatenates their
// batches in worker order.
TrajectoryBatch collect_rollouts(std::vector<RolloutWorker>& workers,
                                 const policy::PolicyParameters& params, int steps,
                                 int segment_length);

TrajectoryBatch merge_batches(std::vector<TrajectoryBatch> parts);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_ROLLOUT_HPP_
