#include "bslab/server/participant.hpp"

#include <deque>

#include "bslab/env/world.hpp"
#include "bslab/server/session.hpp"

namespace bslab::server {

using nlohmann::json;

std::vector<json> ScriptedParticipant::respond(const json& m) {
  received_.push_back(m);
  const auto type = m.value("type", std::string());
  if (type == "round_intro") {
    std::vector<json> out;
    if (m.value("requires_settings", false)) {
      json s = to_json(shaping::sample_condition_weights(rng_));
      s["type"] = "submit_settings";
      out.push_back(s);
    }
    out.push_back({{"type", "ready"}});
    return out;
  }
  if (type == "state") {
    const auto a = static_cast<env::Action>(rng_.below(env::kActionCount));
    return {{{"type", "input"}, {"action", env::to_string(a)}}};
  }
  if (type == "survey_request") {
    json buckets = json::object();
    for (const auto& s : m.at("statements")) {
      buckets[s.at("id").get<std::string>()] = slider_to_bucket(rng_.uniform());
    }
    return {{{"type", "survey"}, {"round", m.at("round")}, {"buckets", buckets}}};
  }
  if (type == "choice_request") {
    static const char* kOptions[] = {"Controllable", "Fixed", "Hidden"};
    json c{{"type", "choice"}, {"condition", kOptions[rng_.below(3)]}};
    if (c["condition"] == "Controllable") c["settings"] = to_json(shaping::sample_condition_weights(rng_));
    return {c};
  }
  if (type == "preference_request") {
    return {{{"type", "preference"}, {"answer", rng_.uniform() < 0.5 ? "first" : "second"}}};
  }
  if (type == "session_end") finished_ = true;
  if (type == "error") ++errors_;
  return {};
}

bool drive_in_process(SessionController& controller, ScriptedParticipant& participant, long long max_events) {
  std::deque<json> inbound;  // server -> participant
  for (auto& m : controller.on_message({{"type", "join"}, {"session_id", controller.session().session_id}})) {
    inbound.push_back(std::move(m));
  }
  for (long long n = 0; n < max_events && !participant.finished(); ++n) {
    if (!inbound.empty()) {
      const json m = std::move(inbound.front());
      inbound.pop_front();
      for (const auto& reply : participant.respond(m)) {
        for (auto& out : controller.on_message(reply)) inbound.push_back(std::move(out));
      }
    } else if (controller.playing()) {
      for (auto& out : controller.on_tick()) inbound.push_back(std::move(out));
    } else {
      return false;  // stalled: nobody has anything to say
    }
  }
  return participant.finished();
}

}  // namespace bslab::server
