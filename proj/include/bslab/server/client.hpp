#ifndef BSLAB_SERVER_CLIENT_HPP_
#define BSLAB_SERVER_CLIENT_HPP_

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bslab/server/participant.hpp"

namespace bslab::server {

struct HttpResponse {
  int status = 0;
  std::string content_type;
  std::string body;
};

// One blocking request; throws DataError when the server is unreachable.
HttpResponse http_request(const std::string& host, unsigned short port, const std::string& method,
                          const std::string& target, const std::string& body = {});

// Blocking WebSocket client that keeps every received text frame verbatim.
class WsClient {
 public:
  WsClient(const std::string& host, unsigned short port, const std::string& target = "/ws");
  ~WsClient();

  void send(const nlohmann::json& message);
  // Next frame, or nullopt once the server closes the connection. Throws
  // DataError if nothing arrives within `timeout`.
  std::optional<nlohmann::json> receive(std::chrono::milliseconds timeout = std::chrono::seconds(10));
  void close();
  const std::vector<std::string>& frames() const { return frames_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::vector<std::string> frames_;
};

// Plays a whole session over the wire. Returns true once session_end arrives.
bool drive_over_websocket(WsClient& client, const std::string& session_id, ScriptedParticipant& participant);

}  // namespace bslab::server

#endif  // BSLAB_SERVER_CLIENT_HPP_
