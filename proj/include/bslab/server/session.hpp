#ifndef BSLAB_SERVER_SESSION_HPP_
#define BSLAB_SERVER_SESSION_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/common/error.hpp"
#include "bslab/server/registry.hpp"
#include "bslab/shaping/behavior.hpp"

namespace bslab::server {

// A client request the protocol refuses; the reason goes back on the wire.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

enum class Protocol { Pairwise, ControlStudy };
enum class Condition { Controllable, Fixed, Hidden, Choice, PairwiseBS, PairwiseSP };

std::string_view to_string(Protocol p);
std::string_view to_string(Condition c);
Protocol parse_protocol(std::string_view s);
Condition parse_condition(std::string_view s);

nlohmann::json to_json(const shaping::ControlPair& c);
shaping::ControlPair control_pair_from_json(const nlohmann::json& j);

struct RoundSpec {
  int index = 0;
  std::string layout;
  Condition condition = Condition::Controllable;
  std::string ai_checkpoint;  // registry id
  std::optional<shaping::ControlPair> settings;  // unset until known
  double duration_s = 0.0;
  bool settings_visible = false;
  int pair = -1;  // Pairwise: index of the comparison this round belongs to
  std::optional<Condition> chosen;  // Choice rounds, once answered
};

struct SessionOptions {
  double control_round_seconds = 60.0;
  double pairwise_round_seconds = 45.0;
  int tick_ms = 200;
  bool show_score = true;
  int control_layouts = 2;
  std::vector<std::string> layout_pool = {"cramped_room", "forced_coordination", "coordination_ring",
                                          "counter_circuit", "asymmetric_advantages"};
};

struct Session {
  std::string session_id;
  std::string participant_id;
  Protocol protocol = Protocol::ControlStudy;
  std::uint64_t seed = 0;
  std::vector<std::string> layouts;
  std::vector<RoundSpec> schedule;
  shaping::ControlPair fixed_weights;
  shaping::ControlPair hidden_weights;
  SessionOptions options;
};

// Env steps in one round: duration / tick, rounded to the nearest step.
int steps_per_round(double duration_s, int tick_ms);

// ControlStudy: `control_layouts` layouts from the pool, each with
// 3 Controllable + 3 Fixed + 3 Hidden rounds in shuffled order and a final
// Choice round. Pairwise: every pool layout, a BS round and an SP round in
// shuffled order. All randomness comes from `seed`. Throws ConfigError
// naming the first layout without a needed checkpoint.
Session create_session(Protocol protocol, const std::string& participant_id, const Registry& registry,
                       std::uint64_t seed, const SessionOptions& options, const std::string& session_id);

nlohmann::json to_json(const RoundSpec& r);
RoundSpec round_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

// The four survey statements, in bucket order.
struct Statement {
  const char* id;
  const char* text;
};
const std::vector<Statement>& survey_statements();

struct SurveyResponse {
  int round = 0;
  int enjoyable = 0;
  int predictable = 0;
  int effective = 0;
  std::optional<int> followed_settings;
};

// Slider position in [0, 1] to one of 21 buckets.
int slider_to_bucket(double position);

// Throws ProtocolError for out-of-range buckets or a followed_settings
// answer that does not match the round's visibility.
void validate_survey(const SurveyResponse& response, const RoundSpec& round);

nlohmann::json to_json(const SurveyResponse& s);
SurveyResponse survey_from_json(const nlohmann::json& j);

}  // namespace bslab::server

#endif  // BSLAB_SERVER_SESSION_HPP_
