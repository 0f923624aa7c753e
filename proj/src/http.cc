#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "bridgeprobe/http_server.h"
#include "bridgeprobe/protocol.h"
#include "bridgeprobe/transport.h"
#include "httplib.h"

namespace bridgeprobe {

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl ParseUrl(std::string url) {
  if (url.starts_with("http://")) url = url.substr(7);
  if (url.starts_with("https://")) {
    throw BackendError(ErrorCode::kBadRequest, "https backends are not supported");
  }
  ParsedUrl out;
  const size_t slash = url.find('/');
  if (slash != std::string::npos) {
    out.path = url.substr(slash);
    url = url.substr(0, slash);
  }
  const size_t colon = url.rfind(':');
  if (colon != std::string::npos) {
    try {
      out.port = std::stoi(url.substr(colon + 1));
    } catch (const std::exception &) {
      throw BackendError(ErrorCode::kBadRequest, "bad port in backend url '" + url + "'");
    }
    url = url.substr(0, colon);
  }
  if (url.empty()) throw BackendError(ErrorCode::kBadRequest, "backend url has no host");
  out.host = url;
  return out;
}

}  // namespace

struct HttpTransport::Impl {
  ParsedUrl url;
  httplib::Client client;

  explicit Impl(ParsedUrl u) : url(std::move(u)), client(url.host, url.port) {
    client.set_read_timeout(600, 0);
  }
};

HttpTransport::HttpTransport(const std::string &url)
    : url_(url), impl_(std::make_unique<Impl>(ParseUrl(url))) {}

HttpTransport::~HttpTransport() = default;

std::string HttpTransport::RoundTrip(const std::string &request) {
  auto result = impl_->client.Post(impl_->url.path, request, "application/json");
  if (!result) {
    throw BackendError(ErrorCode::kTransport,
                       fmt::format("HTTP request to {} failed: {}", url_,
                                   httplib::to_string(result.error())));
  }
  if (result->status != 200) {
    throw BackendError(ErrorCode::kTransport,
                       fmt::format("HTTP {} from {}", result->status, url_));
  }
  std::string body = result->body;
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
  return body;
}

struct HttpRpcServer::Impl {
  httplib::Server server;
  std::thread thread;
  std::mutex mutex;  // one request at a time, like the stdio binding
};

HttpRpcServer::HttpRpcServer(Handler handler) : impl_(std::make_unique<Impl>()) {
  impl_->server.Post(".*", [this, handler](const httplib::Request &req,
                                           httplib::Response &res) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    res.set_content(handler(req.body) + "\n", "application/json");
  });
}

HttpRpcServer::~HttpRpcServer() { Stop(); }

int HttpRpcServer::StartOnAnyPort(const std::string &host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw std::runtime_error("cannot bind HTTP server on " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

bool HttpRpcServer::Listen(const std::string &host, int port) {
  return impl_->server.listen(host, port);
}

void HttpRpcServer::Stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace bridgeprobe
