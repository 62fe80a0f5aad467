#include "bslab/env/observe.hpp"

#include <cstdlib>
#include <limits>

#include "bslab/common/error.hpp"

namespace bslab::env {
namespace {

constexpr int kOwnSize = 10;
constexpr int kPartnerSize = 12;
constexpr int kPotSize = 6;
constexpr int kStaticSize = 6;

struct Scale {
  double x;
  double y;
};

void push_position(FeatureVector& f, Cell c, Scale s) {
  f.push_back(c.x / s.x);
  f.push_back(c.y / s.y);
}

void push_delta(FeatureVector& f, Cell from, Cell to, Scale s) {
  f.push_back((to.x - from.x) / s.x);
  f.push_back((to.y - from.y) / s.y);
}

void push_one_hot(FeatureVector& f, int index, int n) {
  for (int i = 0; i < n; ++i) f.push_back(i == index ? 1.0 : 0.0);
}

void push_agent(FeatureVector& f, const AgentState& a, Scale s) {
  push_position(f, a.position, s);
  push_one_hot(f, static_cast<int>(a.orientation), 4);
  push_one_hot(f, static_cast<int>(a.held), 4);
}

// Nearest by Manhattan distance, ties to the first in row-major order.
Cell nearest(const std::vector<Cell>& cells, Cell from) {
  Cell best = cells.front();
  int best_d = std::numeric_limits<int>::max();
  for (const Cell& c : cells) {
    const int d = std::abs(c.x - from.x) + std::abs(c.y - from.y);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

int observation_size(const Layout& layout) {
  return kOwnSize + kPartnerSize + kPotSize * layout.pot_count() + kStaticSize + 1;
}

FeatureVector observe(const WorldState& state, int agent) {
  if (agent != 0 && agent != 1) throw ContractError("observe: agent index must be 0 or 1");
  const Layout& layout = *state.layout;
  const Scale s{static_cast<double>(std::max(1, layout.width - 1)),
                static_cast<double>(std::max(1, layout.height - 1))};
  const AgentState& self = state.agents[static_cast<std::size_t>(agent)];
  const AgentState& other = state.agents[static_cast<std::size_t>(1 - agent)];

  FeatureVector f;
  f.reserve(static_cast<std::size_t>(observation_size(layout)));
  push_agent(f, self, s);
  push_agent(f, other, s);
  push_delta(f, self.position, other.position, s);
  for (const PotState& p : state.pots) {
    f.push_back(p.onions / 3.0);
    f.push_back(p.phase == PotPhase::Cooking ? 1.0 : 0.0);
    f.push_back(p.phase == PotPhase::Ready ? 1.0 : 0.0);
    f.push_back(static_cast<double>(p.cook_timer) / layout.cook_time);
    push_delta(f, self.position, p.position, s);
  }
  push_delta(f, self.position, nearest(layout.onion_piles, self.position), s);
  push_delta(f, self.position, nearest(layout.dish_piles, self.position), s);
  push_delta(f, self.position, nearest(layout.delivery_zones, self.position), s);
  f.push_back(static_cast<double>(layout.episode_length - state.t) / layout.episode_length);
  return f;
}

}  // namespace bslab::env
