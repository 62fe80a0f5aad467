#ifndef BSLAB_SERVER_CONTROLLER_HPP_
#define BSLAB_SERVER_CONTROLLER_HPP_

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/common/rng.hpp"
#include "bslab/env/world.hpp"
#include "bslab/policy/network.hpp"
#include "bslab/server/registry.hpp"
#include "bslab/server/session.hpp"
#include "bslab/server/store.hpp"

namespace bslab::server {

enum class Phase { AwaitJoin, Intro, Playing, Survey, Preference, Choice, Done };
std::string_view to_string(Phase p);

// Authoritative game and protocol state of one session. Not thread-safe: the
// service feeds every message and tick through one ordered queue.
class SessionController {
 public:
  using Clock = std::function<double()>;  // milliseconds, monotone

  SessionController(Session session, std::shared_ptr<const Registry> registry,
                    std::shared_ptr<SessionStore> store, Clock clock = {});

  // Each call returns the messages to push to the client, in order.
  std::vector<nlohmann::json> on_message(const nlohmann::json& message);
  std::vector<nlohmann::json> on_tick();
  std::vector<nlohmann::json> on_disconnect();

  Phase phase() const { return phase_; }
  bool done() const { return phase_ == Phase::Done; }
  bool playing() const { return phase_ == Phase::Playing; }
  const Session& session() const { return session_; }
  int current_round() const { return round_; }
  // Progress summary; never includes condition weights.
  nlohmann::json status() const;

 private:
  std::vector<nlohmann::json> handle(const nlohmann::json& m);
  std::vector<nlohmann::json> resend_prompt() const;
  nlohmann::json round_intro() const;
  nlohmann::json state_message() const;
  shaping::BehaviorWeights ai_weights() const;
  void start_round();
  std::vector<nlohmann::json> finish_round();
  std::vector<nlohmann::json> advance();
  void log(nlohmann::json event);

  Session session_;
  std::shared_ptr<const Registry> registry_;
  std::shared_ptr<SessionStore> store_;
  Clock clock_;

  Phase phase_ = Phase::AwaitJoin;
  int round_ = 0;
  int attempt_ = 0;
  bool joined_ = false;

  // Live round.
  int steps_ = 0;
  env::WorldState state_;
  int score_ = 0;
  std::optional<env::Action> buffered_;
  const policy::PolicyParameters* ai_params_ = nullptr;
  policy::RecurrentState ai_rstate_;
  shaping::BehaviorWeights ai_omega_;  // empty for SP partners
  RngStream ai_rng_;
  std::uint64_t ai_seed_ = 0;
  double round_start_ms_ = 0.0;
  std::vector<env::JointAction> actions_;
  std::vector<double> tick_ms_;

  std::set<int> completed_;
  std::set<int> surveyed_;
  std::set<int> preferred_pairs_;
  int choices_ = 0;
  int total_score_ = 0;
};

}  // namespace bslab::server

#endif  // BSLAB_SERVER_CONTROLLER_HPP_
