#include "bslab/server/client.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "bslab/common/error.hpp"

namespace bslab::server {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

HttpResponse http_request(const std::string& host, unsigned short port, const std::string& method,
                          const std::string& target, const std::string& body) {
  try {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    beast::tcp_stream stream(ioc);
    stream.connect(resolver.resolve(host, std::to_string(port)));
    http::request<http::string_body> req{http::string_to_verb(method), target, 11};
    req.set(http::field::host, host);
    if (!body.empty()) {
      req.set(http::field::content_type, "application/json");
      req.body() = body;
    }
    req.prepare_payload();
    http::write(stream, req);
    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::read(stream, buffer, res);
    beast::error_code ignored;
    stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
    return {static_cast<int>(res.result_int()), std::string(res[http::field::content_type]), res.body()};
  } catch (const boost::system::system_error& e) {
    throw DataError("http " + method + " " + target + " failed: " + e.what());
  }
}

struct WsClient::Impl {
  net::io_context ioc;
  websocket::stream<beast::tcp_stream> ws{ioc};
  beast::flat_buffer buffer;
  bool open = false;
};

WsClient::WsClient(const std::string& host, unsigned short port, const std::string& target)
    : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->ioc);
    beast::get_lowest_layer(impl_->ws).connect(resolver.resolve(host, std::to_string(port)));
    impl_->ws.handshake(host + ":" + std::to_string(port), target);
    impl_->ws.text(true);
    impl_->open = true;
  } catch (const boost::system::system_error& e) {
    throw DataError("websocket connect to " + host + ":" + std::to_string(port) + " failed: " + e.what());
  }
}

WsClient::~WsClient() {
  try {
    close();
  } catch (...) {
  }
}

void WsClient::send(const json& message) {
  if (!impl_->open) throw DataError("websocket is closed");
  impl_->ws.write(net::buffer(message.dump()));
}

std::optional<json> WsClient::receive(std::chrono::milliseconds timeout) {
  if (!impl_->open) return std::nullopt;
  beast::error_code result = net::error::would_block;
  impl_->buffer.consume(impl_->buffer.size());
  impl_->ws.async_read(impl_->buffer, [&](beast::error_code ec, std::size_t) { result = ec; });
  impl_->ioc.restart();
  impl_->ioc.run_for(timeout);
  if (result == net::error::would_block) {
    beast::get_lowest_layer(impl_->ws).cancel();
    impl_->ioc.restart();
    impl_->ioc.run();
    impl_->open = false;
    throw DataError("no websocket frame within " + std::to_string(timeout.count()) + " ms");
  }
  if (result) {
    impl_->open = false;
    if (result == websocket::error::closed) return std::nullopt;
    throw DataError("websocket read failed: " + result.message());
  }
  frames_.push_back(beast::buffers_to_string(impl_->buffer.data()));
  return json::parse(frames_.back());
}

void WsClient::close() {
  if (!impl_->open) return;
  impl_->open = false;
  impl_->ws.async_close(websocket::close_code::normal, [](beast::error_code) {});
  impl_->ioc.restart();
  impl_->ioc.run_for(std::chrono::seconds(2));
  beast::error_code ignored;
  beast::get_lowest_layer(impl_->ws).socket().close(ignored);
}

bool drive_over_websocket(WsClient& client, const std::string& session_id, ScriptedParticipant& participant) {
  client.send({{"type", "join"}, {"session_id", session_id}});
  while (!participant.finished()) {
    const auto m = client.receive();
    if (!m) return false;
    for (const auto& reply : participant.respond(*m)) client.send(reply);
  }
  return true;
}

}  // namespace bslab::server
