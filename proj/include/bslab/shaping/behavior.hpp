#ifndef BSLAB_SHAPING_BEHAVIOR_HPP_
#define BSLAB_SHAPING_BEHAVIOR_HPP_

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bslab/common/rng.hpp"
#include "bslab/env/observe.hpp"
#include "bslab/env/world.hpp"

namespace bslab::shaping {

// Event-triggered behavioral reward functions. The order of the default spec
// (delivery act, onion in pot, plating) is the omega order everywhere.
enum class BehaviorId { DeliveryAct, OnionInPot, Plating };

std::string_view to_string(BehaviorId id);
BehaviorId parse_behavior_id(std::string_view s);

struct WeightDistribution {
  enum class Kind { Normal, Uniform, Constant };
  Kind kind = Kind::Normal;
  double a = 0.0;  // mean / low / value
  double b = 1.0;  // stddev / high

  double sample(RngStream& rng) const;
};

struct Behavior {
  BehaviorId id;
  WeightDistribution distribution;
};

struct BehaviorSpec {
  std::vector<Behavior> behaviors;

  std::size_t size() const { return behaviors.size(); }
  // Throws ContractError on duplicate ids or invalid distributions.
  void validate() const;
};

// K = 3 with N(0, 1) for every behavior.
BehaviorSpec overcooked_spec();

// Text form used in training configs, e.g.
// "delivery_act:normal(0,1);onion_in_pot:normal(0,1);plating:normal(0,1)".
std::string format_spec(const BehaviorSpec& spec);
BehaviorSpec parse_spec(std::string_view text);

// One agent's omega vector, ordered as the spec.
using BehaviorWeights = std::vector<double>;

// K independent draws; call once per agent per episode with that agent's stream.
BehaviorWeights sample_weights(const BehaviorSpec& spec, RngStream& rng);

bool event_flag(const env::AgentEvents& events, BehaviorId id);

// r'[i] = base[i] + sum_k omega_k[i] * psi_k(events[i]). Behavioral terms are
// per agent; the base reward stays shared.
std::array<double, 2> shaped_reward(const BehaviorSpec& spec,
                                    const std::array<double, 2>& base,
                                    const std::array<env::AgentEvents, 2>& events,
                                    const std::array<BehaviorWeights, 2>& weights);

// Appends the agent's own omega to its features.
env::FeatureVector augment_observation(env::FeatureVector features,
                                       const BehaviorWeights& weights);

// Human-facing three-point scale.
enum class ControlSetting : int { Discourage = -1, Neutral = 0, Encourage = 1 };

std::string_view to_string(ControlSetting s);
ControlSetting parse_control_setting(std::string_view s);

// UI groups: DeliveringDishes drives omega_1 and omega_3, OnionsInPot omega_2.
struct ControlPair {
  ControlSetting dishes = ControlSetting::Neutral;
  ControlSetting onions = ControlSetting::Neutral;

  friend bool operator==(const ControlPair&, const ControlPair&) = default;
};

BehaviorWeights settings_to_weights(const ControlPair& controls);

// Uniform over the 3x3 grid minus (Discourage, Discourage).
ControlPair sample_condition_weights(RngStream& rng);

// The eight allowed pairs, in the sampler's index order.
const std::array<ControlPair, 8>& allowed_condition_pairs();

}  // namespace bslab::shaping

#endif  // BSLAB_SHAPING_BEHAVIOR_HPP_
