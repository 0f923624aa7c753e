// Message transports for the backend protocol.

#ifndef BRIDGEPROBE_TRANSPORT_H_
#define BRIDGEPROBE_TRANSPORT_H_

#include <functional>
#include <memory>
#include <string>

namespace bridgeprobe {

// Sends one request line and returns one response line. One request in
// flight at a time; not shareable across threads.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string RoundTrip(const std::string &request) = 0;
  virtual std::string address() const = 0;
};

// Line-delimited messages over a child process's stdin/stdout. The command
// line is run through /bin/sh.
class ChildProcessTransport : public Transport {
 public:
  explicit ChildProcessTransport(const std::string &command);
  ~ChildProcessTransport() override;

  ChildProcessTransport(const ChildProcessTransport &) = delete;
  ChildProcessTransport &operator=(const ChildProcessTransport &) = delete;

  std::string RoundTrip(const std::string &request) override;
  std::string address() const override { return "cmd:" + command_; }

 private:
  void Shutdown();

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Same message bodies POSTed to an HTTP endpoint.
class HttpTransport : public Transport {
 public:
  // `url` is "http://host:port[/path]" or "host:port[/path]".
  explicit HttpTransport(const std::string &url);
  ~HttpTransport() override;

  std::string RoundTrip(const std::string &request) override;
  std::string address() const override { return "http:" + url_; }

 private:
  struct Impl;
  std::string url_;
  std::unique_ptr<Impl> impl_;
};

// In-process transport around a request handler. Messages still pass
// through their serialized form.
class LoopbackTransport : public Transport {
 public:
  using Handler = std::function<std::string(const std::string &)>;

  explicit LoopbackTransport(Handler handler, std::string name = "loopback")
      : handler_(std::move(handler)), name_(std::move(name)) {}

  std::string RoundTrip(const std::string &request) override {
    return handler_(request);
  }
  std::string address() const override { return name_; }

 private:
  Handler handler_;
  std::string name_;
};

// Parses "cmd:<command line>" or "http:<url>".
std::unique_ptr<Transport> OpenTransport(const std::string &spec);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_TRANSPORT_H_
