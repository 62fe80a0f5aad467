#include "bslab/train/episode.hpp"

#include "bslab/common/error.hpp"
#include "bslab/env/observe.hpp"

namespace bslab::train {

void EpisodeTally::add(const env::StepOutcome& o) {
  for (std::size_t i = 0; i < 2; ++i) {
    deliveries[i] += o.events[i].delivered;
    onions_in_pot[i] += o.events[i].onion_in_pot;
    platings[i] += o.events[i].plated;
  }
  score += o.events[0].delivered + o.events[1].delivered;
}

nlohmann::json to_json(const EpisodeTally& t) {
  return {{"score", t.score},
          {"deliveries", t.deliveries},
          {"onions_in_pot", t.onions_in_pot},
          {"platings", t.platings},
          {"shaped_return", t.shaped_return}};
}

EpisodeTally tally_from_json(const nlohmann::json& j) {
  EpisodeTally t;
  t.score = j.at("score").get<int>();
  t.deliveries = j.at("deliveries").get<std::array<int, 2>>();
  t.onions_in_pot = j.at("onions_in_pot").get<std::array<int, 2>>();
  t.platings = j.at("platings").get<std::array<int, 2>>();
  t.shaped_return = j.at("shaped_return").get<std::array<double, 2>>();
  return t;
}

EpisodeTally run_episode(const env::LayoutPtr& layout, const std::array<Seat, 2>& seats,
                         RngStream& rng, bool greedy, std::vector<env::JointAction>* actions) {
  const int expected = env::observation_size(*layout);
  std::array<policy::RecurrentState, 2> rstate;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto* p = seats[i].params;
    if (!p) throw ContractError("run_episode: seat " + std::to_string(i) + " has no policy");
    if (p->config.input_dim != expected + static_cast<int>(seats[i].weights.size())) {
      throw ContractError("run_episode: seat " + std::to_string(i) + " policy expects input " +
                          std::to_string(p->config.input_dim) + " but layout '" + layout->name +
                          "' gives " + std::to_string(expected) + " + " +
                          std::to_string(seats[i].weights.size()));
    }
    rstate[i] = policy::RecurrentState::zeros(p->config);
  }
  EpisodeTally tally;
  env::WorldState state = env::reset(layout);
  while (!state.done()) {
    env::JointAction joint{};
    for (std::size_t i = 0; i < 2; ++i) {
      const auto obs = shaping::augment_observation(env::observe(state, static_cast<int>(i)), seats[i].weights);
      auto fr = policy::forward(*seats[i].params, obs, rstate[i]);
      joint[i] = greedy ? policy::argmax_action(fr.dist) : policy::sample_action(fr.dist, rng);
      rstate[i] = std::move(fr.state);
    }
    if (actions) actions->push_back(joint);
    auto outcome = env::step(state, joint);
    tally.add(outcome);
    state = std::move(outcome.next_state);
  }
  return tally;
}

EpisodeTally run_random_episode(const env::LayoutPtr& layout, RngStream& rng) {
  EpisodeTally tally;
  env::WorldState state = env::reset(layout);
  while (!state.done()) {
    env::JointAction joint{};
    for (auto& a : joint) a = static_cast<env::Action>(rng.below(env::kActionCount));
    auto outcome = env::step(state, joint);
    tally.add(outcome);
    state = std::move(outcome.next_state);
  }
  return tally;
}

double evaluate_self_play(const policy::PolicyParameters& params, const env::LayoutPtr& layout,
                          int episodes, std::uint64_t seed, bool greedy) {
  if (episodes <= 0) throw ContractError("evaluate_self_play: episodes must be positive");
  const int k = params.config.input_dim - env::observation_size(*layout);
  const shaping::BehaviorWeights zero(static_cast<std::size_t>(std::max(k, 0)), 0.0);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    RngStream rng = RngStream::derive(seed, {static_cast<std::uint64_t>(e)});
    total += run_episode(layout, {Seat{&params, zero}, Seat{&params, zero}}, rng, greedy).score;
  }
  return total / episodes;
}

}  // namespace bslab::train
