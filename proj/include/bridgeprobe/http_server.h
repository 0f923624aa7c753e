// HTTP binding for a protocol request handler: POST a request body, receive
// the response body.

#ifndef BRIDGEPROBE_HTTP_SERVER_H_
#define BRIDGEPROBE_HTTP_SERVER_H_

#include <functional>
#include <memory>
#include <string>

namespace bridgeprobe {

class HttpRpcServer {
 public:
  using Handler = std::function<std::string(const std::string &)>;

  explicit HttpRpcServer(Handler handler);
  ~HttpRpcServer();

  // Binds to a free port and serves on a background thread. Returns the port.
  int StartOnAnyPort(const std::string &host = "127.0.0.1");

  // Serves on the calling thread until Stop().
  bool Listen(const std::string &host, int port);

  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_HTTP_SERVER_H_
