#ifndef BSLAB_SERVER_PARTICIPANT_HPP_
#define BSLAB_SERVER_PARTICIPANT_HPP_

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/common/rng.hpp"
#include "bslab/server/controller.hpp"

namespace bslab::server {

// Seeded stand-in for a human: answers every prompt with valid random input.
// Used by tests, the acceptance suite and load checks, in process or over
// the WebSocket protocol.
class ScriptedParticipant {
 public:
  explicit ScriptedParticipant(std::uint64_t seed) : rng_(seed) {}

  // Replies to one server message.
  std::vector<nlohmann::json> respond(const nlohmann::json& message);

  bool finished() const { return finished_; }
  const std::vector<nlohmann::json>& received() const { return received_; }
  int errors() const { return errors_; }

 private:
  RngStream rng_;
  std::vector<nlohmann::json> received_;
  bool finished_ = false;
  int errors_ = 0;
};

// Plays a whole session against a controller without a network: messages
// are exchanged until the participant goes idle, then the clock ticks.
// Returns false if `max_events` elapse before the session ends.
bool drive_in_process(SessionController& controller, ScriptedParticipant& participant,
                      long long max_events = 1'000'000);

}  // namespace bslab::server

#endif  // BSLAB_SERVER_PARTICIPANT_HPP_
