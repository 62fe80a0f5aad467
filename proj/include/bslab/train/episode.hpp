#ifndef BSLAB_TRAIN_EPISODE_HPP_
#define BSLAB_TRAIN_EPISODE_HPP_

#include <array>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/common/rng.hpp"
#include "bslab/env/world.hpp"
#include "bslab/policy/network.hpp"
#include "bslab/shaping/behavior.hpp"

namespace bslab::train {

// Per-episode event counts, indexed by seat.
struct EpisodeTally {
  int score = 0;
  std::array<int, 2> deliveries{};
  std::array<int, 2> onions_in_pot{};
  std::array<int, 2> platings{};
  std::array<double, 2> shaped_return{};

  void add(const env::StepOutcome& outcome);
  friend bool operator==(const EpisodeTally&, const EpisodeTally&) = default;
};

nlohmann::json to_json(const EpisodeTally& t);
EpisodeTally tally_from_json(const nlohmann::json& j);

// One seat of an evaluation episode: a policy snapshot and the omega it sees.
struct Seat {
  const policy::PolicyParameters* params = nullptr;
  shaping::BehaviorWeights weights;
};

// Plays one full episode. Seat 0 samples before seat 1 from the shared rng;
// greedy play takes the argmax action instead.
EpisodeTally run_episode(const env::LayoutPtr& layout, const std::array<Seat, 2>& seats,
                         RngStream& rng, bool greedy,
                         std::vector<env::JointAction>* actions = nullptr);

// Both seats pick uniformly among the six actions.
EpisodeTally run_random_episode(const env::LayoutPtr& layout, RngStream& rng);

// Mean score of `episodes` self-play episodes at omega = 0; episode e uses
// RngStream::derive(seed, {e}).
double evaluate_self_play(const policy::PolicyParameters& params, const env::LayoutPtr& layout,
                          int episodes, std::uint64_t seed, bool greedy);

}  // namespace bslab::train

#endif  // BSLAB_TRAIN_EPISODE_HPP_
