#include "bslab/server/controller.hpp"

#include <chrono>

#include "bslab/env/observe.hpp"

namespace bslab::server {

using nlohmann::json;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::AwaitJoin: return "AwaitJoin";
    case Phase::Intro: return "Intro";
    case Phase::Playing: return "Playing";
    case Phase::Survey: return "Survey";
    case Phase::Preference: return "Preference";
    case Phase::Choice: return "Choice";
    case Phase::Done: return "Done";
  }
  return "?";
}

namespace {

json error_message(const std::string& reason) { return {{"type", "error"}, {"reason", reason}}; }

double steady_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

SessionController::SessionController(Session session, std::shared_ptr<const Registry> registry,
                                     std::shared_ptr<SessionStore> store, Clock clock)
    : session_(std::move(session)),
      registry_(std::move(registry)),
      store_(std::move(store)),
      clock_(clock ? std::move(clock) : Clock(steady_ms)) {
  if (session_.schedule.empty()) throw ContractError("session has no rounds");
  log({{"event", "session_created"}, {"session", to_json(session_)}});
}

void SessionController::log(json event) {
  if (store_) store_->append(session_.session_id, std::move(event));
}

json SessionController::status() const {
  return {{"session_id", session_.session_id},
          {"participant_id", session_.participant_id},
          {"protocol", to_string(session_.protocol)},
          {"phase", to_string(phase_)},
          {"round", round_},
          {"round_count", session_.schedule.size()},
          {"rounds_completed", completed_.size()},
          {"surveys", surveyed_.size()},
          {"choices", choices_},
          {"preferences", preferred_pairs_.size()},
          {"total_score", total_score_}};
}

shaping::BehaviorWeights SessionController::ai_weights() const {
  const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  return r.settings ? shaping::settings_to_weights(*r.settings) : shaping::BehaviorWeights{0.0, 0.0, 0.0};
}

json SessionController::round_intro() const {
  const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  const int steps = steps_per_round(r.duration_s, session_.options.tick_ms);
  json m{{"type", "round_intro"},
         {"round", r.index},
         {"round_count", session_.schedule.size()},
         {"layout", r.layout},
         {"condition", to_string(r.chosen ? *r.chosen : r.condition)},
         {"duration", r.duration_s},
         {"tick_ms", session_.options.tick_ms},
         {"steps", steps},
         {"human_seat", 0},
         {"requires_settings", r.condition == Condition::Controllable}};
  if (r.settings_visible && r.settings) m["visible_settings"] = to_json(*r.settings);
  if (r.condition == Condition::Hidden || (r.chosen && *r.chosen == Condition::Hidden)) {
    m["notice"] = "Your partner's behavior is unspecified this round.";
  }
  return m;
}

json SessionController::state_message() const {
  const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  const double left = static_cast<double>(steps_ - state_.t) * session_.options.tick_ms / 1000.0;
  json m{{"type", "state"}, {"round", r.index}, {"t", state_.t}, {"state", env::to_json(state_)}, {"time_left", left}};
  if (session_.options.show_score) m["score"] = score_;
  return m;
}

std::vector<json> SessionController::resend_prompt() const {
  switch (phase_) {
    case Phase::Intro: return {round_intro()};
    case Phase::Survey: {
      const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
      json statements = json::array();
      for (const auto& s : survey_statements()) {
        if (std::string(s.id) == "followed_settings" && !r.settings_visible) continue;
        statements.push_back({{"id", s.id}, {"text", s.text}});
      }
      return {{{"type", "survey_request"}, {"round", r.index}, {"statements", statements}, {"buckets", 21}}};
    }
    case Phase::Preference: {
      const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
      return {{{"type", "preference_request"},
               {"pair", r.pair},
               {"rounds", {r.index - 1, r.index}},
               {"question", "Did you prefer your first or second partner?"},
               {"options", {"first", "second"}}}};
    }
    case Phase::Choice: {
      const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
      return {{{"type", "choice_request"},
               {"round", r.index},
               {"layout", r.layout},
               {"options", {"Controllable", "Fixed", "Hidden"}}}};
    }
    case Phase::Done:
      return {{{"type", "session_end"},
               {"summary",
                {{"rounds", completed_.size()},
                 {"surveys", surveyed_.size()},
                 {"choices", choices_},
                 {"preferences", preferred_pairs_.size()},
                 {"total_score", total_score_}}}}};
    default: return {};
  }
}

void SessionController::start_round() {
  const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  const auto* entry = registry_->by_id(r.ai_checkpoint);
  if (!entry) throw DataError("checkpoint '" + r.ai_checkpoint + "' is no longer in the registry");
  steps_ = steps_per_round(r.duration_s, session_.options.tick_ms);
  const auto layout = env::with_episode_length(env::load_named_layout(r.layout), steps_);
  state_ = env::reset(layout);
  score_ = 0;
  buffered_.reset();
  ai_params_ = &entry->checkpoint->params;
  ai_rstate_ = policy::RecurrentState::zeros(ai_params_->config);
  const int k = ai_params_->config.input_dim - env::observation_size(*layout);
  ai_omega_ = ai_weights();
  if (k == 0) {
    ai_omega_.clear();
  } else if (k != static_cast<int>(ai_omega_.size())) {
    throw DataError("checkpoint '" + r.ai_checkpoint + "' does not fit layout '" + r.layout + "'");
  }
  ai_seed_ = RngStream::derive(session_.seed, {0xa1, static_cast<std::uint64_t>(round_),
                                              static_cast<std::uint64_t>(attempt_)})
                 .next_u64();
  ai_rng_ = RngStream(ai_seed_);
  actions_.clear();
  tick_ms_.clear();
  round_start_ms_ = clock_();
  phase_ = Phase::Playing;
  log({{"event", "round_start"},
       {"round", r.index},
       {"attempt", attempt_},
       {"spec", to_json(r)},
       {"omega", ai_weights()},
       {"ai_seed", ai_seed_},
       {"steps", steps_}});
}

std::vector<json> SessionController::on_tick() {
  if (phase_ != Phase::Playing) return {};
  const env::Action human = buffered_.value_or(env::Action::Stay);
  buffered_.reset();
  const auto obs = shaping::augment_observation(env::observe(state_, 1), ai_omega_);
  auto fr = policy::forward(*ai_params_, obs, ai_rstate_);
  ai_rstate_ = std::move(fr.state);
  const env::Action ai = policy::sample_action(fr.dist, ai_rng_);
  const env::JointAction joint{human, ai};
  auto outcome = env::step(state_, joint);
  score_ += outcome.events[0].delivered + outcome.events[1].delivered;
  state_ = std::move(outcome.next_state);
  actions_.push_back(joint);
  tick_ms_.push_back(clock_() - round_start_ms_);
  std::vector<json> out{state_message()};
  if (state_.t >= steps_) {
    auto rest = finish_round();
    out.insert(out.end(), rest.begin(), rest.end());
  }
  return out;
}

std::vector<json> SessionController::finish_round() {
  const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  json acts = json::array();
  for (const auto& a : actions_) acts.push_back({env::to_string(a[0]), env::to_string(a[1])});
  log({{"event", "round_end"},
       {"round", r.index},
       {"attempt", attempt_},
       {"spec", to_json(r)},
       {"omega", ai_weights()},
       {"ai_seed", ai_seed_},
       {"steps", steps_},
       {"score", score_},
       {"actions", acts},
       {"tick_ms", tick_ms_}});
  completed_.insert(r.index);
  total_score_ += score_;
  std::vector<json> out{{{"type", "round_end"}, {"round", r.index}, {"score", score_}}};
  if (session_.protocol == Protocol::ControlStudy) {
    phase_ = Phase::Survey;
    auto prompt = resend_prompt();
    out.insert(out.end(), prompt.begin(), prompt.end());
    return out;
  }
  const bool second_of_pair = round_ > 0 && session_.schedule[static_cast<std::size_t>(round_ - 1)].pair == r.pair;
  if (second_of_pair) {
    phase_ = Phase::Preference;
    auto prompt = resend_prompt();
    out.insert(out.end(), prompt.begin(), prompt.end());
    return out;
  }
  auto next = advance();
  out.insert(out.end(), next.begin(), next.end());
  return out;
}

std::vector<json> SessionController::advance() {
  ++round_;
  attempt_ = 0;
  if (round_ >= static_cast<int>(session_.schedule.size())) {
    round_ = static_cast<int>(session_.schedule.size()) - 1;
    phase_ = Phase::Done;
    log({{"event", "session_end"}, {"summary", resend_prompt()[0]["summary"]}});
    return resend_prompt();
  }
  const auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  phase_ = r.condition == Condition::Choice && !r.chosen ? Phase::Choice : Phase::Intro;
  return resend_prompt();
}

std::vector<json> SessionController::on_disconnect() {
  joined_ = false;
  if (phase_ == Phase::Playing) {
    log({{"event", "round_abandoned"},
         {"round", session_.schedule[static_cast<std::size_t>(round_)].index},
         {"attempt", attempt_},
         {"t", state_.t}});
    ++attempt_;
    phase_ = Phase::Intro;
  }
  return {};
}

std::vector<json> SessionController::on_message(const json& m) {
  try {
    return handle(m);
  } catch (const ProtocolError& e) {
    return {error_message(e.what())};
  } catch (const ParseError& e) {
    return {error_message(e.what())};
  } catch (const json::exception& e) {
    return {error_message(std::string("malformed message: ") + e.what())};
  }
}

std::vector<json> SessionController::handle(const json& m) {
  if (!m.is_object() || !m.contains("type") || !m["type"].is_string()) {
    throw ProtocolError("message needs a string 'type'");
  }
  const auto type = m["type"].get<std::string>();
  if (type == "join") {
    if (!m.contains("session_id") || m["session_id"] != session_.session_id) {
      throw ProtocolError("unknown session");
    }
    joined_ = true;
    if (phase_ == Phase::AwaitJoin) {
      log({{"event", "joined"}});
      phase_ = Phase::Intro;
    }
    if (phase_ == Phase::Playing) return {round_intro(), state_message()};
    return resend_prompt();
  }
  if (!joined_) throw ProtocolError("join the session first");

  auto& r = session_.schedule[static_cast<std::size_t>(round_)];
  if (type == "input") {
    if (phase_ != Phase::Playing) return {};  // stale key presses are dropped
    const auto a = env::parse_action(m.at("action").get<std::string>());
    if (!a) throw ProtocolError("unknown action '" + m["action"].get<std::string>() + "'");
    buffered_ = *a;
    return {};
  }
  if (type == "submit_settings") {
    if (phase_ != Phase::Intro || r.condition != Condition::Controllable) {
      throw ProtocolError("settings can only be submitted before a Controllable round");
    }
    r.settings = control_pair_from_json(m);
    log({{"event", "settings"}, {"round", r.index}, {"settings", to_json(*r.settings)}});
    json ack = to_json(*r.settings);
    ack["type"] = "settings_confirmed";
    ack["round"] = r.index;
    return {ack};
  }
  if (type == "ready") {
    if (phase_ != Phase::Intro) throw ProtocolError("no round is waiting to start");
    if (r.condition == Condition::Controllable && !r.settings) {
      throw ProtocolError("submit settings before starting a Controllable round");
    }
    start_round();
    return {state_message()};
  }
  if (type == "survey") {
    json body = m;
    if (!body.contains("round")) body["round"] = r.index;  // defaults to the round awaiting a survey
    const auto s = survey_from_json(body);
    if (s.round < 0 || s.round >= static_cast<int>(session_.schedule.size())) {
      throw ProtocolError("unknown round " + std::to_string(s.round));
    }
    if (surveyed_.count(s.round)) throw ProtocolError("duplicate survey for round " + std::to_string(s.round));
    if (phase_ != Phase::Survey || s.round != r.index) {
      throw ProtocolError("round " + std::to_string(s.round) + " is not awaiting a survey");
    }
    validate_survey(s, r);
    surveyed_.insert(s.round);
    json ev = to_json(s);
    ev["event"] = "survey";
    log(ev);
    return advance();
  }
  if (type == "choice") {
    if (phase_ != Phase::Choice) throw ProtocolError("no choice is pending");
    const auto cond = parse_condition(m.at("condition").get<std::string>());
    if (cond == Condition::Controllable) {
      if (!m.contains("settings")) throw ProtocolError("choosing Controllable needs settings");
      r.settings = control_pair_from_json(m["settings"]);
      r.settings_visible = true;
    } else if (cond == Condition::Fixed) {
      r.settings = session_.fixed_weights;
      r.settings_visible = true;
    } else if (cond == Condition::Hidden) {
      r.settings = session_.hidden_weights;
      r.settings_visible = false;
    } else {
      throw ProtocolError("choice must be Controllable, Fixed or Hidden");
    }
    r.chosen = cond;
    ++choices_;
    log({{"event", "choice"},
         {"round", r.index},
         {"condition", to_string(cond)},
         {"settings", cond == Condition::Controllable ? to_json(*r.settings) : json(nullptr)}});
    phase_ = Phase::Intro;
    return {round_intro()};
  }
  if (type == "preference") {
    if (phase_ != Phase::Preference) throw ProtocolError("no preference question is pending");
    const auto answer = m.at("answer").get<std::string>();
    if (answer != "first" && answer != "second") throw ProtocolError("preference must be 'first' or 'second'");
    preferred_pairs_.insert(r.pair);
    log({{"event", "preference"},
         {"pair", r.pair},
         {"answer", answer},
         {"first", session_.schedule[static_cast<std::size_t>(round_ - 1)].condition == Condition::PairwiseBS ? "BS" : "SP"},
         {"second", r.condition == Condition::PairwiseBS ? "BS" : "SP"}});
    return advance();
  }
  throw ProtocolError("unknown message type '" + type + "'");
}

}  // namespace bslab::server
