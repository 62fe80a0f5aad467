#include "bslab/train/rollout.hpp"

#include <exception>
#include <thread>

#include "bslab/common/error.hpp"
#include "bslab/env/observe.hpp"

namespace bslab::train {

using policy::Matrix;

RolloutWorker::RolloutWorker(env::LayoutPtr layout, shaping::BehaviorSpec spec, Mode mode,
                             const policy::PolicyConfig& policy_config, int envs,
                             std::uint64_t seed, int worker_index)
    : layout_(std::move(layout)), spec_(std::move(spec)), mode_(mode), policy_config_(policy_config) {
  if (envs <= 0) throw ContractError("RolloutWorker: envs must be positive");
  const auto w = static_cast<std::uint64_t>(worker_index);
  for (int e = 0; e < envs; ++e) {
    const auto ue = static_cast<std::uint64_t>(e);
    EnvSlot slot;
    slot.action_rng = RngStream::derive(seed, {1, w, ue});
    slot.omega_rng = {RngStream::derive(seed, {2, w, ue, 0}), RngStream::derive(seed, {2, w, ue, 1})};
    begin_episode(slot);
    slots_.push_back(std::move(slot));
  }
}

void RolloutWorker::begin_episode(EnvSlot& slot) {
  slot.state = env::reset(layout_);
  for (std::size_t i = 0; i < 2; ++i) {
    slot.omega[i] = mode_ == Mode::BS ? shaping::sample_weights(spec_, slot.omega_rng[i])
                                      : shaping::BehaviorWeights(spec_.size(), 0.0);
    slot.rstate[i] = policy::RecurrentState::zeros(policy_config_);
  }
  slot.tally = EpisodeTally{};
  slot.fresh = true;
}

TrajectoryBatch RolloutWorker::collect(const policy::PolicyParameters& params, int steps,
                                       int segment_length, const ActionOverride& override_actions) {
  const int envs = static_cast<int>(slots_.size());
  const int streams = envs * 2;
  const int dim = params.config.input_dim;
  const int hidden = params.config.hidden_dim;
  const int k = static_cast<int>(spec_.size());
  const bool recurrent = params.config.recurrent;
  if (recurrent && (segment_length <= 0 || steps % segment_length != 0)) {
    throw ContractError("collect: recurrent rollouts need steps divisible by segment_length");
  }

  TrajectoryBatch b;
  b.streams = streams;
  b.steps = steps;
  b.segment_length = recurrent ? segment_length : 0;
  const auto rows = static_cast<std::size_t>(streams) * static_cast<std::size_t>(steps);
  b.obs.resize(static_cast<Eigen::Index>(rows), dim);
  b.omega.resize(static_cast<Eigen::Index>(rows), k);
  b.actions.resize(rows);
  b.log_probs.resize(rows);
  b.values.resize(rows);
  b.rewards.resize(rows);
  b.base_rewards.resize(rows);
  b.dones.resize(rows);
  b.episode_start.resize(rows);
  b.bootstrap.resize(static_cast<std::size_t>(streams));
  if (recurrent) {
    b.segment_h.resize(streams * b.segments(), hidden);
    b.segment_c.resize(streams * b.segments(), hidden);
  }

  Matrix obs(streams, dim), h0, c0;
  if (recurrent) {
    h0.resize(streams, hidden);
    c0.resize(streams, hidden);
  }
  auto gather = [&] {
    for (int e = 0; e < envs; ++e) {
      auto& slot = slots_[static_cast<std::size_t>(e)];
      for (int i = 0; i < 2; ++i) {
        const auto features = shaping::augment_observation(env::observe(slot.state, i), slot.omega[static_cast<std::size_t>(i)]);
        if (static_cast<int>(features.size()) != dim) {
          throw ContractError("collect: policy input_dim " + std::to_string(dim) +
                              " does not match observation length " + std::to_string(features.size()));
        }
        const int s = e * 2 + i;
        for (int d = 0; d < dim; ++d) obs(s, d) = features[static_cast<std::size_t>(d)];
        if (recurrent) {
          const auto& rs = slot.rstate[static_cast<std::size_t>(i)];
          for (int j = 0; j < hidden; ++j) {
            h0(s, j) = rs.h[static_cast<std::size_t>(j)];
            c0(s, j) = rs.c[static_cast<std::size_t>(j)];
          }
        }
      }
    }
  };

  for (int t = 0; t < steps; ++t) {
    gather();
    if (recurrent && t % segment_length == 0) {
      const int g = t / segment_length;
      for (int s = 0; s < streams; ++s) {
        b.segment_h.row(s * b.segments() + g) = h0.row(s);
        b.segment_c.row(s * b.segments() + g) = c0.row(s);
      }
    }
    const auto fwd = policy::forward_batch(params, obs, h0, c0);
    for (int e = 0; e < envs; ++e) {
      auto& slot = slots_[static_cast<std::size_t>(e)];
      env::JointAction joint{};
      for (int i = 0; i < 2; ++i) {
        const int s = e * 2 + i;
        const auto dist = policy::distribution_from_log_probs(
            std::span<const double>(fwd.log_probs.data() + static_cast<std::ptrdiff_t>(s) * env::kActionCount, env::kActionCount));
        joint[static_cast<std::size_t>(i)] = policy::sample_action(dist, slot.action_rng);
      }
      if (override_actions) joint = override_actions(e, slot.state);

      auto outcome = env::step(slot.state, joint);
      const auto shaped = mode_ == Mode::BS
                              ? shaping::shaped_reward(spec_, outcome.base_reward, outcome.events, slot.omega)
                              : outcome.base_reward;
      slot.tally.add(outcome);
      for (int i = 0; i < 2; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int s = e * 2 + i;
        const auto row = static_cast<std::size_t>(s) * static_cast<std::size_t>(steps) + static_cast<std::size_t>(t);
        const auto r = static_cast<Eigen::Index>(row);
        b.obs.row(r) = obs.row(s);
        for (int q = 0; q < k; ++q) b.omega(r, q) = slot.omega[ui][static_cast<std::size_t>(q)];
        const int a = static_cast<int>(joint[ui]);
        b.actions[row] = a;
        b.log_probs[row] = fwd.log_probs(s, a);
        b.values[row] = fwd.values(s);
        b.rewards[row] = shaped[ui];
        b.base_rewards[row] = outcome.base_reward[ui];
        b.dones[row] = outcome.done;
        b.episode_start[row] = slot.fresh;
        slot.tally.shaped_return[ui] += shaped[ui];
        if (recurrent) {
          auto& rs = slot.rstate[ui];
          for (int j = 0; j < hidden; ++j) {
            rs.h[static_cast<std::size_t>(j)] = fwd.h(s, j);
            rs.c[static_cast<std::size_t>(j)] = fwd.c(s, j);
          }
        }
      }
      slot.fresh = false;
      slot.state = std::move(outcome.next_state);
      if (outcome.done) {
        b.finished.push_back(slot.tally);
        begin_episode(slot);
      }
    }
  }

  gather();
  const auto tail = policy::forward_batch(params, obs, h0, c0);
  for (int s = 0; s < streams; ++s) b.bootstrap[static_cast<std::size_t>(s)] = tail.values(s);
  return b;
}

namespace {

nlohmann::json rstate_json(const policy::RecurrentState& r) { return {{"h", r.h}, {"c", r.c}}; }

}  // namespace

nlohmann::json RolloutWorker::to_json() const {
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& slot : slots_) {
    envs.push_back({{"state", env::to_json(slot.state)},
                    {"omega", slot.omega},
                    {"rstate", {rstate_json(slot.rstate[0]), rstate_json(slot.rstate[1])}},
                    {"action_rng", slot.action_rng.serialize()},
                    {"omega_rng", {slot.omega_rng[0].serialize(), slot.omega_rng[1].serialize()}},
                    {"tally", train::to_json(slot.tally)},
                    {"fresh", slot.fresh}});
  }
  return {{"envs", envs}};
}

void RolloutWorker::restore(const nlohmann::json& j) {
  const auto& envs = j.at("envs");
  if (envs.size() != slots_.size()) {
    throw DataError("runner state has " + std::to_string(envs.size()) + " envs, config expects " +
                    std::to_string(slots_.size()));
  }
  for (std::size_t e = 0; e < slots_.size(); ++e) {
    const auto& je = envs[e];
    auto& slot = slots_[e];
    slot.state = env::world_from_json(je.at("state"), layout_);
    slot.omega = je.at("omega").get<std::array<shaping::BehaviorWeights, 2>>();
    for (std::size_t i = 0; i < 2; ++i) {
      slot.rstate[i].h = je.at("rstate")[i].at("h").get<std::vector<double>>();
      slot.rstate[i].c = je.at("rstate")[i].at("c").get<std::vector<double>>();
      slot.omega_rng[i] = RngStream::deserialize(je.at("omega_rng")[i].get<std::string>());
    }
    slot.action_rng = RngStream::deserialize(je.at("action_rng").get<std::string>());
    slot.tally = tally_from_json(je.at("tally"));
    slot.fresh = je.at("fresh").get<bool>();
  }
}

TrajectoryBatch merge_batches(std::vector<TrajectoryBatch> parts) {
  if (parts.empty()) throw ContractError("merge_batches: nothing to merge");
  if (parts.size() == 1) return std::move(parts.front());
  TrajectoryBatch out;
  out.steps = parts.front().steps;
  out.segment_length = parts.front().segment_length;
  Eigen::Index rows = 0, seg_rows = 0;
  for (const auto& p : parts) {
    if (p.steps != out.steps || p.segment_length != out.segment_length) {
      throw ContractError("merge_batches: incompatible parts");
    }
    out.streams += p.streams;
    rows += p.obs.rows();
    seg_rows += p.segment_h.rows();
  }
  out.obs.resize(rows, parts.front().obs.cols());
  out.omega.resize(rows, parts.front().omega.cols());
  if (seg_rows > 0) {
    out.segment_h.resize(seg_rows, parts.front().segment_h.cols());
    out.segment_c.resize(seg_rows, parts.front().segment_c.cols());
  }
  Eigen::Index r = 0, g = 0;
  auto append = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
  for (auto& p : parts) {
    out.obs.middleRows(r, p.obs.rows()) = p.obs;
    out.omega.middleRows(r, p.omega.rows()) = p.omega;
    r += p.obs.rows();
    if (seg_rows > 0) {
      out.segment_h.middleRows(g, p.segment_h.rows()) = p.segment_h;
      out.segment_c.middleRows(g, p.segment_c.rows()) = p.segment_c;
      g += p.segment_h.rows();
    }
    append(out.actions, p.actions);
    append(out.log_probs, p.log_probs);
    append(out.values, p.values);
    append(out.rewards, p.rewards);
    append(out.base_rewards, p.base_rewards);
    append(out.dones, p.dones);
    append(out.episode_start, p.episode_start);
    append(out.bootstrap, p.bootstrap);
    append(out.finished, p.finished);
  }
  return out;
}

TrajectoryBatch collect_rollouts(std::vector<RolloutWorker>& workers,
                                 const policy::PolicyParameters& params, int steps,
                                 int segment_length) {
  std::vector<TrajectoryBatch> parts(workers.size());
  if (workers.size() == 1) {
    parts[0] = workers[0].collect(params, steps, segment_length);
  } else {
    std::vector<std::exception_ptr> errors(workers.size());
    std::vector<std::thread> threads;
    threads.reserve(workers.size());
    for (std::size_t w = 0; w < workers.size(); ++w) {
      threads.emplace_back([&, w] {
        try {
          parts[w] = workers[w].collect(params, steps, segment_length);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return merge_batches(std::move(parts));
}

}  // namespace bslab::train
