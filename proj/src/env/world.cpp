#include "bslab/env/world.hpp"

#include <algorithm>

#include "bslab/common/error.hpp"

namespace bslab::env {
namespace {

std::optional<Orientation> move_direction(Action a) {
  switch (a) {
    case Action::North: return Orientation::North;
    case Action::South: return Orientation::South;
    case Action::East: return Orientation::East;
    case Action::West: return Orientation::West;
    default: return std::nullopt;
  }
}

PotState* pot_at(WorldState& s, Cell c) {
  for (auto& p : s.pots) {
    if (p.position == c) return &p;
  }
  return nullptr;
}

void interact(WorldState& s, int seat, StepOutcome& out) {
  AgentState& agent = s.agents[static_cast<std::size_t>(seat)];
  const Layout& layout = *s.layout;
  const Cell target = facing_cell(agent);
  if (!layout.in_bounds(target)) return;
  AgentEvents& ev = out.events[static_cast<std::size_t>(seat)];

  switch (layout.at(target)) {
    case Tile::Floor:
      return;
    case Tile::OnionPile:
      if (agent.held == Item::Nothing) agent.held = Item::Onion;
      return;
    case Tile::DishPile:
      if (agent.held == Item::Nothing) agent.held = Item::CleanDish;
      return;
    case Tile::Pot: {
      PotState* pot = pot_at(s, target);
      if (agent.held == Item::Onion && pot->phase == PotPhase::Filling) {
        agent.held = Item::Nothing;
        ++pot->onions;
        ev.onion_in_pot = true;
        if (pot->onions == 3) {
          pot->phase = PotPhase::Cooking;
          pot->cook_timer = layout.cook_time;
        }
      } else if (agent.held == Item::CleanDish && pot->phase == PotPhase::Ready) {
        agent.held = Item::SoupDish;
        *pot = PotState{pot->position, 0, 0, PotPhase::Filling};
        ev.plated = true;
      }
      return;
    }
    case Tile::DeliveryZone:
      if (agent.held == Item::SoupDish) {
        agent.held = Item::Nothing;
        ev.delivered = true;
        out.base_reward[0] += 1.0;
        out.base_reward[1] += 1.0;
      }
      return;
    case Tile::Counter: {
      auto it = s.counter_items.find(target);
      if (it == s.counter_items.end()) {
        if (agent.held != Item::Nothing) {
          s.counter_items.emplace(target, agent.held);
          agent.held = Item::Nothing;
        }
      } else if (agent.held == Item::Nothing) {
        agent.held = it->second;
        s.counter_items.erase(it);
      }
      return;
    }
  }
}

}  // namespace

Cell direction_delta(Orientation o) {
  switch (o) {
    case Orientation::North: return {0, -1};
    case Orientation::South: return {0, 1};
    case Orientation::East: return {1, 0};
    case Orientation::West: return {-1, 0};
  }
  return {0, 0};
}

Cell facing_cell(const AgentState& agent) {
  const Cell d = direction_delta(agent.orientation);
  return {agent.position.x + d.x, agent.position.y + d.y};
}

WorldState reset(LayoutPtr layout) {
  if (!layout) throw ContractError("reset: null layout");
  WorldState s;
  for (std::size_t i = 0; i < 2; ++i) {
    s.agents[i] = AgentState{layout->spawns[i], Orientation::North, Item::Nothing};
  }
  s.pots.reserve(layout->pots.size());
  for (const Cell& c : layout->pots) s.pots.push_back(PotState{c, 0, 0, PotPhase::Filling});
  s.t = 0;
  s.layout = std::move(layout);
  return s;
}

StepOutcome step(const WorldState& state, const JointAction& joint_action) {
  if (state.done()) {
    throw ContractError("step: episode already finished at t=" +
                        std::to_string(state.t));
  }
  StepOutcome out;
  out.next_state = state;
  WorldState& s = out.next_state;
  const Layout& layout = *s.layout;

  std::vector<char> was_cooking(s.pots.size());
  for (std::size_t i = 0; i < s.pots.size(); ++i) {
    was_cooking[i] = s.pots[i].phase == PotPhase::Cooking;
  }

  for (int seat = 0; seat < 2; ++seat) {
    if (joint_action[static_cast<std::size_t>(seat)] == Action::Interact) interact(s, seat, out);
  }

  std::array<Cell, 2> target{s.agents[0].position, s.agents[1].position};
  for (std::size_t i = 0; i < 2; ++i) {
    if (auto dir = move_direction(joint_action[i])) {
      s.agents[i].orientation = *dir;
      const Cell d = direction_delta(*dir);
      const Cell n{s.agents[i].position.x + d.x, s.agents[i].position.y + d.y};
      if (layout.walkable(n)) target[i] = n;
    }
  }
  const bool same_cell = target[0] == target[1];
  const bool swap = target[0] == s.agents[1].position && target[1] == s.agents[0].position;
  if (!same_cell && !swap) {
    s.agents[0].position = target[0];
    s.agents[1].position = target[1];
  }

  for (std::size_t i = 0; i < s.pots.size(); ++i) {
    PotState& p = s.pots[i];
    if (!was_cooking[i] || p.phase != PotPhase::Cooking) continue;
    if (--p.cook_timer <= 0) {
      p.cook_timer = 0;
      p.phase = PotPhase::Ready;
    }
  }

  ++s.t;
  out.done = s.done();
  return out;
}

int score(std::span<const StepOutcome> trajectory) {
  int total = 0;
  for (const auto& o : trajectory) {
    total += static_cast<int>(o.events[0].delivered) + static_cast<int>(o.events[1].delivered);
  }
  return total;
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::North: return "North";
    case Action::South: return "South";
    case Action::East: return "East";
    case Action::West: return "West";
    case Action::Stay: return "Stay";
    case Action::Interact: return "Interact";
  }
  return "?";
}

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::North: return "N";
    case Orientation::South: return "S";
    case Orientation::East: return "E";
    case Orientation::West: return "W";
  }
  return "?";
}

std::string_view to_string(Item i) {
  switch (i) {
    case Item::Nothing: return "Nothing";
    case Item::Onion: return "Onion";
    case Item::CleanDish: return "CleanDish";
    case Item::SoupDish: return "SoupDish";
  }
  return "?";
}

std::string_view to_string(PotPhase p) {
  switch (p) {
    case PotPhase::Filling: return "Filling";
    case PotPhase::Cooking: return "Cooking";
    case PotPhase::Ready: return "Ready";
  }
  return "?";
}

std::optional<Action> parse_action(std::string_view s) {
  for (int i = 0; i < kActionCount; ++i) {
    const auto a = static_cast<Action>(i);
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

namespace {

template <typename E, int N>
E parse_enum(const nlohmann::json& j, const char* what) {
  if (!j.is_string()) throw ParseError(std::string("expected string for ") + what);
  const auto s = j.get<std::string>();
  for (int i = 0; i < N; ++i) {
    if (to_string(static_cast<E>(i)) == s) return static_cast<E>(i);
  }
  throw ParseError(std::string("unknown ") + what + " '" + s + "'");
}

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.x, c.y}); }

Cell cell_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y] cell");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

nlohmann::json to_json(const WorldState& state) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : state.agents) {
    agents.push_back({{"position", cell_json(a.position)},
                      {"orientation", to_string(a.orientation)},
                      {"held", to_string(a.held)}});
  }
  nlohmann::json pots = nlohmann::json::array();
  for (const auto& p : state.pots) {
    pots.push_back({{"position", cell_json(p.position)},
                    {"onions", p.onions},
                    {"cook_timer", p.cook_timer},
                    {"phase", to_string(p.phase)}});
  }
  nlohmann::json counters = nlohmann::json::array();
  for (const auto& [cell, item] : state.counter_items) {
    counters.push_back({{"position", cell_json(cell)}, {"item", to_string(item)}});
  }
  return {{"layout", state.layout->name},
          {"t", state.t},
          {"agents", std::move(agents)},
          {"pots", std::move(pots)},
          {"counter_items", std::move(counters)}};
}

WorldState world_from_json(const nlohmann::json& j, LayoutPtr layout) {
  try {
    if (j.at("layout").get<std::string>() != layout->name) {
      throw ParseError("state layout '" + j.at("layout").get<std::string>() +
                       "' does not match '" + layout->name + "'");
    }
    WorldState s = reset(layout);
    s.t = j.at("t").get<int>();
    const auto& agents = j.at("agents");
    if (agents.size() != 2) throw ParseError("state must hold 2 agents");
    for (std::size_t i = 0; i < 2; ++i) {
      s.agents[i].position = cell_from(agents[i].at("position"));
      s.agents[i].orientation = parse_enum<Orientation, 4>(agents[i].at("orientation"), "orientation");
      s.agents[i].held = parse_enum<Item, 4>(agents[i].at("held"), "item");
    }
    const auto& pots = j.at("pots");
    if (pots.size() != s.pots.size()) throw ParseError("pot count mismatch");
    for (std::size_t i = 0; i < pots.size(); ++i) {
      s.pots[i].position = cell_from(pots[i].at("position"));
      s.pots[i].onions = pots[i].at("onions").get<int>();
      s.pots[i].cook_timer = pots[i].at("cook_timer").get<int>();
      s.pots[i].phase = parse_enum<PotPhase, 3>(pots[i].at("phase"), "pot phase");
    }
    for (const auto& c : j.at("counter_items")) {
      s.counter_items[cell_from(c.at("position"))] = parse_enum<Item, 4>(c.at("item"), "item");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed world state: ") + e.what());
  }
}

std::string render_ascii(const WorldState& state) {
  const Layout& layout = *state.layout;
  std::vector<std::string> rows(static_cast<std::size_t>(layout.height),
                                std::string(static_cast<std::size_t>(layout.width), ' '));
  for (int y = 0; y < layout.height; ++y) {
    for (int x = 0; x < layout.width; ++x) {
      rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = tile_char(layout.at({x, y}));
    }
  }
  auto glyph = [](Item i) {
    switch (i) {
      case Item::Onion: return 'o';
      case Item::CleanDish: return 'd';
      case Item::SoupDish: return 's';
      default: return ' ';
    }
  };
  for (const auto& [c, item] : state.counter_items) {
    rows[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)] = glyph(item);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const Cell c = state.agents[i].position;
    rows[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)] = static_cast<char>('1' + i);
  }
  std::string out = "t=" + std::to_string(state.t) + "\n";
  for (const auto& r : rows) out += r + "\n";
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& a = state.agents[i];
    out += "agent" + std::to_string(i) + " " + std::string(to_string(a.orientation)) +
           " holding " + std::string(to_string(a.held)) + "\n";
  }
  for (const auto& p : state.pots) {
    out += "pot(" + std::to_string(p.position.x) + "," + std::to_string(p.position.y) +
           ") " + std::string(to_string(p.phase)) + " onions=" + std::to_string(p.onions) +
           " timer=" + std::to_string(p.cook_timer) + "\n";
  }
  return out;
}

}  // namespace bslab::env
