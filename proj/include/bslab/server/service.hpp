#ifndef BSLAB_SERVER_SERVICE_HPP_
#define BSLAB_SERVER_SERVICE_HPP_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "bslab/server/registry.hpp"
#include "bslab/server/session.hpp"

namespace bslab::server {

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path store_dir = "sessions";
  std::optional<std::filesystem::path> static_dir;  // served under /
  SessionOptions session;
  int threads = 1;
  double drain_seconds = 3.0;  // grace period for open sockets on stop()
};

// HTTP + WebSocket front end. Routes:
//   POST /api/sessions            {protocol, participant_id, seed?} -> 201
//   GET  /api/sessions/<id>       progress summary
//   GET  /api/export/rounds.csv   one row per completed round
//   GET  /api/export/sessions.jsonl
//   GET  /api/health              registry summary
//   GET  /ws                      WebSocket upgrade; first frame must be join
// Each session's messages and ticks are serialized; sessions run in parallel
// across the worker threads.
class Service {
 public:
  Service(std::shared_ptr<const Registry> registry, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts the worker threads; returns the bound port. Throws
  // ConfigError when the port is busy or a pool layout lacks a BS checkpoint.
  unsigned short start();
  // Stops accepting, closes participant sockets (in-progress rounds are
  // logged as abandoned) and joins the workers. Idempotent.
  void stop();
  unsigned short port() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace bslab::server

#endif  // BSLAB_SERVER_SERVICE_HPP_
