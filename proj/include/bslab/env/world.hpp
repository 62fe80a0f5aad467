#ifndef BSLAB_ENV_WORLD_HPP_
#define BSLAB_ENV_WORLD_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/env/layout.hpp"

namespace bslab::env {

enum class Orientation : std::uint8_t { North, South, East, West };
enum class Item : std::uint8_t { Nothing, Onion, CleanDish, SoupDish };
enum class PotPhase : std::uint8_t { Filling, Cooking, Ready };

// Index order is part of the policy output contract.
enum class Action : std::uint8_t { North, South, East, West, Stay, Interact };
inline constexpr int kActionCount = 6;
using JointAction = std::array<Action, 2>;

struct AgentState {
  Cell position;
  Orientation orientation = Orientation::North;
  Item held = Item::Nothing;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct PotState {
  Cell position;
  int onions = 0;
  int cook_timer = 0;
  PotPhase phase = PotPhase::Filling;

  friend bool operator==(const PotState&, const PotState&) = default;
};

struct WorldState {
  LayoutPtr layout;
  std::array<AgentState, 2> agents{};
  std::vector<PotState> pots;  // same order as layout->pots
  std::map<Cell, Item> counter_items;
  int t = 0;

  bool done() const { return t >= layout->episode_length; }

  friend bool operator==(const WorldState& a, const WorldState& b) {
    return a.layout == b.layout && a.agents == b.agents && a.pots == b.pots &&
           a.counter_items == b.counter_items && a.t == b.t;
  }
};

// Per-agent behavioral events emitted by one transition.
struct AgentEvents {
  bool delivered = false;
  bool onion_in_pot = false;
  bool plated = false;

  friend bool operator==(const AgentEvents&, const AgentEvents&) = default;
};

struct StepOutcome {
  WorldState next_state;
  std::array<double, 2> base_reward{0.0, 0.0};
  std::array<AgentEvents, 2> events{};
  bool done = false;
};

WorldState reset(LayoutPtr layout);

// Pure transition. Interactions resolve first in seat order against the
// cells faced at the start of the step; movement resolves next with mutual
// blocking; pots that were already cooking then tick down.
// Throws ContractError when the state is already terminal.
StepOutcome step(const WorldState& state, const JointAction& joint_action);

// Total deliveries in a trajectory.
int score(std::span<const StepOutcome> trajectory);

Cell facing_cell(const AgentState& agent);
Cell direction_delta(Orientation o);

// Enum spellings used on the wire and in logs.
std::string_view to_string(Action a);
std::string_view to_string(Orientation o);
std::string_view to_string(Item i);
std::string_view to_string(PotPhase p);
std::optional<Action> parse_action(std::string_view s);

nlohmann::json to_json(const WorldState& state);
// Rebuilds a state against the given layout; throws ParseError on bad input.
WorldState world_from_json(const nlohmann::json& j, LayoutPtr layout);

// Plain-text frame of the grid (agents as 1/2, items as lowercase glyphs).
std::string render_ascii(const WorldState& state);

}  // namespace bslab::env

#endif  // BSLAB_ENV_WORLD_HPP_
