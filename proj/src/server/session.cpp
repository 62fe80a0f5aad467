#include "bslab/server/session.hpp"

#include <algorithm>
#include <cmath>

namespace bslab::server {

using shaping::ControlPair;
using shaping::ControlSetting;

std::string_view to_string(Protocol p) { return p == Protocol::Pairwise ? "Pairwise" : "ControlStudy"; }

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Controllable: return "Controllable";
    case Condition::Fixed: return "Fixed";
    case Condition::Hidden: return "Hidden";
    case Condition::Choice: return "Choice";
    case Condition::PairwiseBS: return "PairwiseBS";
    case Condition::PairwiseSP: return "PairwiseSP";
  }
  return "?";
}

Protocol parse_protocol(std::string_view s) {
  if (s == "Pairwise") return Protocol::Pairwise;
  if (s == "ControlStudy") return Protocol::ControlStudy;
  throw ParseError("unknown protocol '" + std::string(s) + "' (expected Pairwise or ControlStudy)");
}

Condition parse_condition(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(Condition::PairwiseSP); ++i) {
    if (to_string(static_cast<Condition>(i)) == s) return static_cast<Condition>(i);
  }
  throw ParseError("unknown condition '" + std::string(s) + "'");
}

nlohmann::json to_json(const ControlPair& c) {
  const auto w = shaping::settings_to_weights(c);
  return {{"dishes", shaping::to_string(c.dishes)}, {"onions", shaping::to_string(c.onions)}, {"omega", w}};
}

ControlPair control_pair_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dishes") || !j.contains("onions") || !j["dishes"].is_string() ||
      !j["onions"].is_string()) {
    throw ParseError("settings need string fields 'dishes' and 'onions'");
  }
  return {shaping::parse_control_setting(j["dishes"].get<std::string>()),
          shaping::parse_control_setting(j["onions"].get<std::string>())};
}

int steps_per_round(double duration_s, int tick_ms) {
  if (duration_s <= 0.0 || tick_ms <= 0) throw ConfigError("round duration and tick must be positive");
  const int steps = static_cast<int>(std::lround(duration_s * 1000.0 / tick_ms));
  if (steps <= 0) throw ConfigError("round shorter than one tick");
  return steps;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

const RegistryEntry& need(const Registry& reg, const std::string& layout, const char* mode) {
  const auto* e = reg.find(layout, mode);
  if (!e) throw ConfigError(std::string("registry has no ") + mode + " checkpoint for layout '" + layout + "'");
  return *e;
}

}  // namespace

Session create_session(Protocol protocol, const std::string& participant_id, const Registry& registry,
                       std::uint64_t seed, const SessionOptions& options, const std::string& session_id) {
  steps_per_round(protocol == Protocol::ControlStudy ? options.control_round_seconds : options.pairwise_round_seconds,
                  options.tick_ms);
  Session s;
  s.session_id = session_id;
  s.participant_id = participant_id;
  s.protocol = protocol;
  s.seed = seed;
  s.options = options;
  RngStream rng = RngStream::derive(seed, {0x5e55});
  auto pool = options.layout_pool;
  if (pool.empty()) throw ConfigError("layout pool is empty");
  shuffle(pool, rng);
  // Drawn for every session so both protocols consume the stream alike.
  s.fixed_weights = shaping::sample_condition_weights(rng);
  s.hidden_weights = shaping::sample_condition_weights(rng);

  if (protocol == Protocol::ControlStudy) {
    if (options.control_layouts <= 0 || options.control_layouts > static_cast<int>(pool.size())) {
      throw ConfigError("control_layouts must be between 1 and the pool size");
    }
    s.layouts.assign(pool.begin(), pool.begin() + options.control_layouts);
    for (const auto& layout : s.layouts) {
      const auto& bs = need(registry, layout, "BS");
      std::vector<Condition> conds;
      for (Condition c : {Condition::Controllable, Condition::Fixed, Condition::Hidden}) {
        for (int k = 0; k < 3; ++k) conds.push_back(c);
      }
      shuffle(conds, rng);
      conds.push_back(Condition::Choice);
      for (Condition c : conds) {
        RoundSpec r;
        r.index = static_cast<int>(s.schedule.size());
        r.layout = layout;
        r.condition = c;
        r.ai_checkpoint = bs.id;
        r.duration_s = options.control_round_seconds;
        if (c == Condition::Fixed) r.settings = s.fixed_weights;
        if (c == Condition::Hidden) r.settings = s.hidden_weights;
        r.settings_visible = c == Condition::Controllable || c == Condition::Fixed;
        s.schedule.push_back(r);
      }
    }
  } else {
    s.layouts = pool;
    int pair = 0;
    for (const auto& layout : s.layouts) {
      const auto& bs = need(registry, layout, "BS");
      const auto& sp = need(registry, layout, "SP");
      std::vector<Condition> order{Condition::PairwiseBS, Condition::PairwiseSP};
      shuffle(order, rng);
      for (Condition c : order) {
        RoundSpec r;
        r.index = static_cast<int>(s.schedule.size());
        r.layout = layout;
        r.condition = c;
        r.ai_checkpoint = c == Condition::PairwiseBS ? bs.id : sp.id;
        r.settings = ControlPair{ControlSetting::Neutral, ControlSetting::Neutral};
        r.duration_s = options.pairwise_round_seconds;
        r.settings_visible = false;
        r.pair = pair;
        s.schedule.push_back(r);
      }
      ++pair;
    }
  }
  return s;
}

nlohmann::json to_json(const RoundSpec& r) {
  nlohmann::json j{{"index", r.index},
                   {"layout", r.layout},
                   {"condition", to_string(r.condition)},
                   {"ai_checkpoint", r.ai_checkpoint},
                   {"duration", r.duration_s},
                   {"settings_visible", r.settings_visible},
                   {"pair", r.pair}};
  j["settings"] = r.settings ? to_json(*r.settings) : nlohmann::json(nullptr);
  j["chosen"] = r.chosen ? nlohmann::json(to_string(*r.chosen)) : nlohmann::json(nullptr);
  return j;
}

RoundSpec round_from_json(const nlohmann::json& j) {
  RoundSpec r;
  r.index = j.at("index").get<int>();
  r.layout = j.at("layout").get<std::string>();
  r.condition = parse_condition(j.at("condition").get<std::string>());
  r.ai_checkpoint = j.at("ai_checkpoint").get<std::string>();
  r.duration_s = j.at("duration").get<double>();
  r.settings_visible = j.at("settings_visible").get<bool>();
  r.pair = j.at("pair").get<int>();
  if (!j.at("settings").is_null()) r.settings = control_pair_from_json(j["settings"]);
  if (!j.at("chosen").is_null()) r.chosen = parse_condition(j["chosen"].get<std::string>());
  return r;
}

nlohmann::json to_json(const Session& s) {
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& r : s.schedule) sched.push_back(to_json(r));
  return {{"session_id", s.session_id},
          {"participant_id", s.participant_id},
          {"protocol", to_string(s.protocol)},
          {"seed", s.seed},
          {"layouts", s.layouts},
          {"schedule", sched},
          {"fixed_weights", to_json(s.fixed_weights)},
          {"hidden_weights", to_json(s.hidden_weights)},
          {"options",
           {{"control_round_seconds", s.options.control_round_seconds},
            {"pairwise_round_seconds", s.options.pairwise_round_seconds},
            {"tick_ms", s.options.tick_ms},
            {"show_score", s.options.show_score},
            {"control_layouts", s.options.control_layouts},
            {"layout_pool", s.options.layout_pool}}}};
}

Session session_from_json(const nlohmann::json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.participant_id = j.at("participant_id").get<std::string>();
  s.protocol = parse_protocol(j.at("protocol").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.layouts = j.at("layouts").get<std::vector<std::string>>();
  for (const auto& r : j.at("schedule")) s.schedule.push_back(round_from_json(r));
  s.fixed_weights = control_pair_from_json(j.at("fixed_weights"));
  s.hidden_weights = control_pair_from_json(j.at("hidden_weights"));
  const auto& o = j.at("options");
  s.options.control_round_seconds = o.at("control_round_seconds").get<double>();
  s.options.pairwise_round_seconds = o.at("pairwise_round_seconds").get<double>();
  s.options.tick_ms = o.at("tick_ms").get<int>();
  s.options.show_score = o.at("show_score").get<bool>();
  s.options.control_layouts = o.at("control_layouts").get<int>();
  s.options.layout_pool = o.at("layout_pool").get<std::vector<std::string>>();
  return s;
}

const std::vector<Statement>& survey_statements() {
  static const std::vector<Statement> s{
      {"enjoyable", "My partner was enjoyable to work with"},
      {"predictable", "My partner's behavior was predictable"},
      {"effective", "My partner was effective as a teammate"},
      {"followed_settings", "My partner followed its behavior settings"},
  };
  return s;
}

int slider_to_bucket(double position) {
  if (!(position >= 0.0 && position <= 1.0)) throw ProtocolError("slider position outside [0, 1]");
  return static_cast<int>(std::lround(position * 20.0));
}

void validate_survey(const SurveyResponse& r, const RoundSpec& round) {
  auto check = [](int v, const char* name) {
    if (v < 0 || v > 20) throw ProtocolError(std::string("bucket '") + name + "' out of range 0..20");
  };
  check(r.enjoyable, "enjoyable");
  check(r.predictable, "predictable");
  check(r.effective, "effective");
  if (round.settings_visible) {
    if (!r.followed_settings) throw ProtocolError("followed_settings is required when settings were shown");
    check(*r.followed_settings, "followed_settings");
  } else if (r.followed_settings) {
    throw ProtocolError("followed_settings is not asked when settings were hidden");
  }
}

nlohmann::json to_json(const SurveyResponse& s) {
  nlohmann::json b{{"enjoyable", s.enjoyable}, {"predictable", s.predictable}, {"effective", s.effective}};
  if (s.followed_settings) b["followed_settings"] = *s.followed_settings;
  return {{"round", s.round}, {"buckets", b}};
}

SurveyResponse survey_from_json(const nlohmann::json& j) {
  if (!j.contains("round") || !j["round"].is_number_integer()) throw ProtocolError("survey needs an integer 'round'");
  if (!j.contains("buckets") || !j["buckets"].is_object()) throw ProtocolError("survey needs a 'buckets' object");
  const auto& b = j["buckets"];
  auto get = [&](const char* k) {
    if (!b.contains(k) || !b[k].is_number_integer()) throw ProtocolError(std::string("survey bucket '") + k + "' missing");
    return b[k].get<int>();
  };
  for (const auto& [k, v] : b.items()) {
    if (k != "enjoyable" && k != "predictable" && k != "effective" && k != "followed_settings") {
      throw ProtocolError("unknown survey bucket '" + k + "'");
    }
  }
  SurveyResponse s;
  s.round = j["round"].get<int>();
  s.enjoyable = get("enjoyable");
  s.predictable = get("predictable");
  s.effective = get("effective");
  if (b.contains("followed_settings")) s.followed_settings = get("followed_settings");
  return s;
}

}  // namespace bslab::server
