#include "bslab/server/service.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "bslab/common/error.hpp"
#include "bslab/server/controller.hpp"
#include "bslab/server/store.hpp"

namespace bslab::server {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;
using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

namespace {

class WsConnection;
class HttpConnection;

// One participant session: the controller plus its tick timer. All access
// goes through `mu`, so messages and ticks form one ordered stream.
struct LiveSession : std::enable_shared_from_this<LiveSession> {
  LiveSession(net::io_context& ioc, SessionController c, std::chrono::milliseconds tick)
      : controller(std::move(c)), timer(ioc), tick(tick) {}

  std::mutex mu;
  SessionController controller;
  net::steady_timer timer;
  std::chrono::milliseconds tick;
  std::chrono::steady_clock::time_point next_tick;
  std::uint64_t generation = 0;  // bumps on every start/cancel; stale wakeups are ignored
  bool ticking = false;
  std::weak_ptr<WsConnection> conn;

  void send_locked(const std::vector<json>& out);
  void deliver(const json& message, const std::shared_ptr<WsConnection>& from);
  void attach(const std::shared_ptr<WsConnection>& c);
  void detach(const WsConnection* c);
  void start_ticks_locked();
  void stop_ticks_locked();
  void schedule_locked(std::uint64_t gen);
  void on_timer(std::uint64_t gen, beast::error_code ec);
  void shutdown();
};

struct Shared {
  std::shared_ptr<const Registry> registry;
  ServiceOptions options;
  std::shared_ptr<SessionStore> store;
  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions;
  std::atomic<int> sockets{0};
  std::mutex conns_mu;
  std::vector<std::weak_ptr<WsConnection>> conns;
  std::vector<std::weak_ptr<HttpConnection>> http_conns;

  template <typename T>
  void track(std::vector<std::weak_ptr<T>>& list, const std::shared_ptr<T>& c) {
    std::lock_guard lock(conns_mu);
    std::erase_if(list, [](const std::weak_ptr<T>& w) { return w.expired(); });
    list.push_back(c);
  }

  std::shared_ptr<LiveSession> find(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    const auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }
};

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, std::shared_ptr<Shared> shared)
      : ws_(std::move(socket)), shared_(std::move(shared)) {
    ++shared_->sockets;
  }
  ~WsConnection() { --shared_->sockets; }

  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

  void send(std::string text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      if (self->closing_) return;
      self->queue_.push_back(std::move(text));
      if (self->queue_.size() == 1) self->write();
    });
  }

  // Only once the workers have stopped.
  void force_close() {
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->closing_) return;
      self->closing_ = true;
      self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) {});
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->handle(text);
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->queue_.pop_front();
      if (!self->queue_.empty() && !self->closing_) self->write();
    });
  }

  void reply_error(const std::string& reason) { send(json{{"type", "error"}, {"reason", reason}}.dump()); }

  void handle(const std::string& text) {
    json message;
    try {
      message = json::parse(text);
    } catch (const json::exception&) {
      reply_error("frame is not valid JSON");
      return;
    }
    if (!live_) {
      if (!message.is_object() || message.value("type", "") != "join" || !message.contains("session_id") ||
          !message["session_id"].is_string()) {
        reply_error("join the session first");
        return;
      }
      live_ = shared_->find(message["session_id"].get<std::string>());
      if (!live_) {
        reply_error("unknown session");
        return;
      }
      live_->attach(shared_from_this());
    }
    live_->deliver(message, shared_from_this());
  }

  void closed() {
    if (live_) live_->detach(this);
    live_.reset();
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Shared> shared_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::shared_ptr<LiveSession> live_;
  bool closing_ = false;
};

void LiveSession::send_locked(const std::vector<json>& out) {
  if (auto c = conn.lock()) {
    for (const auto& m : out) c->send(m.dump());
  }
}

void LiveSession::attach(const std::shared_ptr<WsConnection>& c) {
  std::lock_guard lock(mu);
  if (auto old = conn.lock(); old && old != c) {
    // A newer tab takes over; the old socket no longer counts as the participant.
    conn.reset();
    controller.on_disconnect();
    stop_ticks_locked();
    old->close();
  }
  conn = c;
}

void LiveSession::detach(const WsConnection* c) {
  std::lock_guard lock(mu);
  if (conn.lock().get() != c) return;
  conn.reset();
  controller.on_disconnect();
  stop_ticks_locked();
}

void LiveSession::deliver(const json& message, const std::shared_ptr<WsConnection>& from) {
  std::lock_guard lock(mu);
  if (conn.lock() != from) return;
  send_locked(controller.on_message(message));
  if (controller.playing() && !ticking) start_ticks_locked();
}

void LiveSession::start_ticks_locked() {
  ticking = true;
  next_tick = std::chrono::steady_clock::now() + tick;
  schedule_locked(++generation);
}

void LiveSession::stop_ticks_locked() {
  ticking = false;
  ++generation;
  timer.cancel();
}

void LiveSession::schedule_locked(std::uint64_t gen) {
  timer.expires_at(next_tick);
  timer.async_wait([self = shared_from_this(), gen](beast::error_code ec) { self->on_timer(gen, ec); });
}

void LiveSession::on_timer(std::uint64_t gen, beast::error_code ec) {
  std::lock_guard lock(mu);
  if (ec || gen != generation) return;
  send_locked(controller.on_tick());
  if (!controller.playing()) {
    ticking = false;
    return;
  }
  // Fixed rate: the schedule does not drift with handler latency, but a
  // stalled process does not replay a burst of missed ticks either.
  next_tick += tick;
  const auto now = std::chrono::steady_clock::now();
  if (next_tick < now) next_tick = now;
  schedule_locked(gen);
}

void LiveSession::shutdown() {
  std::lock_guard lock(mu);
  stop_ticks_locked();
  if (auto c = conn.lock()) c->close();
}

std::string content_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

std::string random_id() {
  std::random_device rd;
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 4; ++i) os << (rd() & 0xffff);
  return os.str();
}

Response make_response(const Request& req, http::status status, std::string body, std::string type) {
  Response res{status, req.version()};
  res.set(http::field::server, "bslab");
  res.set(http::field::content_type, type);
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response json_response(const Request& req, http::status status, const json& body) {
  return make_response(req, status, body.dump(), "application/json");
}

Response json_error(const Request& req, http::status status, const std::string& reason) {
  return json_response(req, status, {{"error", reason}});
}

Response route(const Request& req, Shared& shared, net::io_context& ioc) {
  const std::string target(req.target());
  const std::string path = target.substr(0, target.find('?'));
  try {
    if (path == "/api/health" && req.method() == http::verb::get) {
      std::size_t live = 0;
      {
        std::lock_guard lock(shared.sessions_mu);
        live = shared.sessions.size();
      }
      return json_response(req, http::status::ok,
                           {{"status", "ok"}, {"registry", shared.registry->summary()}, {"sessions", live}});
    }
    if (path == "/api/sessions" && req.method() == http::verb::post) {
      json body;
      try {
        body = json::parse(req.body());
      } catch (const json::exception&) {
        return json_error(req, http::status::bad_request, "body is not valid JSON");
      }
      if (!body.is_object() || !body.contains("protocol") || !body["protocol"].is_string()) {
        return json_error(req, http::status::bad_request, "'protocol' is required");
      }
      if (!body.contains("participant_id") || !body["participant_id"].is_string()) {
        return json_error(req, http::status::bad_request, "'participant_id' is required");
      }
      const auto protocol = parse_protocol(body["protocol"].get<std::string>());
      std::uint64_t seed = 0;
      if (body.contains("seed")) {
        if (!body["seed"].is_number_unsigned()) return json_error(req, http::status::bad_request, "'seed' must be unsigned");
        seed = body["seed"].get<std::uint64_t>();
      } else {
        std::random_device rd;
        seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
      }
      const std::string id = random_id();
      Session session;
      try {
        session = create_session(protocol, body["participant_id"].get<std::string>(), *shared.registry, seed,
                                 shared.options.session, id);
      } catch (const ConfigError& e) {
        return json_error(req, http::status::conflict, e.what());
      }
      auto live = std::make_shared<LiveSession>(
          ioc, SessionController(session, shared.registry, shared.store),
          std::chrono::milliseconds(shared.options.session.tick_ms));
      {
        std::lock_guard lock(shared.sessions_mu);
        shared.sessions[id] = live;
      }
      return json_response(req, http::status::created,
                           {{"session_id", id},
                            {"participant_id", session.participant_id},
                            {"protocol", to_string(session.protocol)},
                            {"round_count", session.schedule.size()},
                            {"tick_ms", session.options.tick_ms},
                            {"websocket", "/ws"}});
    }
    if (path.rfind("/api/sessions/", 0) == 0 && req.method() == http::verb::get) {
      auto live = shared.find(path.substr(std::string("/api/sessions/").size()));
      if (!live) return json_error(req, http::status::not_found, "unknown session");
      std::lock_guard lock(live->mu);
      return json_response(req, http::status::ok, live->controller.status());
    }
    if (path == "/api/export/rounds.csv" && req.method() == http::verb::get) {
      return make_response(req, http::status::ok, export_rounds_csv(shared.store->dir()), "text/csv");
    }
    if (path == "/api/export/sessions.jsonl" && req.method() == http::verb::get) {
      return make_response(req, http::status::ok, export_jsonl(shared.store->dir()), "application/x-ndjson");
    }
    if (shared.options.static_dir && req.method() == http::verb::get && path.find("..") == std::string::npos) {
      auto file = *shared.options.static_dir / (path == "/" ? std::string("index.html") : path.substr(1));
      if (std::filesystem::is_regular_file(file)) {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return make_response(req, http::status::ok, os.str(), content_type_for(file));
      }
    }
    return json_error(req, http::status::not_found, "no route for " + path);
  } catch (const ParseError& e) {
    return json_error(req, http::status::bad_request, e.what());
  } catch (const Error& e) {
    return json_error(req, http::status::internal_server_error, e.what());
  }
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, std::shared_ptr<Shared> shared, net::io_context& ioc)
      : stream_(std::move(socket)), shared_(std::move(shared)), ioc_(ioc) {}

  void run() { read(); }

  // Only once the workers have stopped.
  void force_close() {
    beast::error_code ignored;
    stream_.socket().close(ignored);
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->dispatch();
    });
  }

  void dispatch() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() != "/ws") {
        res_ = json_error(req_, http::status::not_found, "websocket endpoint is /ws");
      } else {
        stream_.expires_never();
        auto ws = std::make_shared<WsConnection>(stream_.release_socket(), shared_);
        shared_->track(shared_->conns, ws);
        ws->run(std::move(req_));
        return;
      }
    } else {
      res_ = route(req_, *shared_, ioc_);
    }
    http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (self->res_.keep_alive()) {
        self->read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Shared> shared_;
  net::io_context& ioc_;
  beast::flat_buffer buffer_;
  Request req_;
  Response res_;
};

}  // namespace

struct Service::Impl : std::enable_shared_from_this<Service::Impl> {
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::shared_ptr<Shared> shared = std::make_shared<Shared>();
  std::optional<net::executor_work_guard<net::io_context::executor_type>> guard;
  std::vector<std::thread> threads;
  unsigned short port = 0;
  bool running = false;

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [self = shared_from_this()](beast::error_code ec, tcp::socket s) {
      if (ec) return;  // acceptor closed
      auto conn = std::make_shared<HttpConnection>(std::move(s), self->shared, self->ioc);
      self->shared->track(self->shared->http_conns, conn);
      conn->run();
      self->accept();
    });
  }
};

Service::Service(std::shared_ptr<const Registry> registry, ServiceOptions options)
    : impl_(std::make_shared<Impl>()) {
  impl_->shared->registry = std::move(registry);
  impl_->shared->options = std::move(options);
}

Service::~Service() { stop(); }

unsigned short Service::start() {
  if (impl_->running) return impl_->port;
  auto& s = *impl_->shared;
  std::vector<std::string> missing;
  for (const auto& layout : s.options.session.layout_pool) {
    if (!s.registry->find(layout, "BS")) missing.push_back(layout);
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw ConfigError("registry has no BS checkpoint for: " + names);
  }
  s.store = std::make_shared<SessionStore>(s.options.store_dir);

  beast::error_code ec;
  const auto address = net::ip::make_address(s.options.address, ec);
  if (ec) throw ConfigError("bad listen address '" + s.options.address + "'");
  const tcp::endpoint endpoint(address, s.options.port);
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol(), ec);
  if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(endpoint, ec);
  if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw ConfigError("cannot listen on " + s.options.address + ":" + std::to_string(s.options.port) + ": " +
                      ec.message());
  }
  impl_->port = acc.local_endpoint().port();
  impl_->guard.emplace(impl_->ioc.get_executor());
  impl_->accept();
  const int n = std::max(1, s.options.threads);
  for (int i = 0; i < n; ++i) impl_->threads.emplace_back([impl = impl_] { impl->ioc.run(); });
  impl_->running = true;
  return impl_->port;
}

void Service::stop() {
  if (!impl_->running) return;
  impl_->running = false;
  auto impl = impl_;
  net::post(impl->ioc, [impl] {
    beast::error_code ignored;
    impl->acceptor.close(ignored);
  });
  std::vector<std::shared_ptr<LiveSession>> live;
  {
    std::lock_guard lock(impl->shared->sessions_mu);
    for (auto& [id, s] : impl->shared->sessions) live.push_back(s);
  }
  for (auto& s : live) s->shutdown();
  {
    std::lock_guard lock(impl->shared->conns_mu);
    for (auto& w : impl->shared->conns) {
      if (auto c = w.lock()) c->close();
    }
  }
  impl->guard.reset();
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(impl->shared->options.drain_seconds);
  while (impl->shared->sockets.load() > 0 && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  impl->ioc.stop();
  for (auto& t : impl->threads) t.join();
  impl->threads.clear();
  // Sockets that did not finish closing are cut; their handlers then run
  // once with an error and release the connections.
  {
    std::lock_guard lock(impl->shared->conns_mu);
    for (auto& w : impl->shared->conns) {
      if (auto c = w.lock()) c->force_close();
    }
    for (auto& w : impl->shared->http_conns) {
      if (auto c = w.lock()) c->force_close();
    }
  }
  impl->ioc.restart();
  impl->ioc.poll();
  // Anything still mid-round after the drain is recorded as abandoned.
  for (auto& s : live) {
    std::lock_guard lock(s->mu);
    if (s->controller.playing()) s->controller.on_disconnect();
  }
}

unsigned short Service::port() const { return impl_->port; }

}  // namespace bslab::server
