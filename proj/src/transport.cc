#include "bridgeprobe/transport.h"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include <fmt/format.h>

#include "bridgeprobe/protocol.h"

extern char **environ;

namespace bridgeprobe {

namespace {

[[noreturn]] void TransportFailure(const std::string &what) {
  throw BackendError(ErrorCode::kTransport, what);
}

void IgnoreSigpipe() {
  static const bool done = [] {
    struct sigaction action {};
    action.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &action, nullptr);
    return true;
  }();
  (void)done;
}

}  // namespace

ChildProcessTransport::ChildProcessTransport(const std::string &command)
    : command_(command) {
  IgnoreSigpipe();
  int in_pipe[2];   // parent -> child
  int out_pipe[2];  // child -> parent
  if (pipe2(in_pipe, O_CLOEXEC) != 0) TransportFailure("pipe: " + std::string(strerror(errno)));
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    TransportFailure("pipe: " + std::string(strerror(errno)));
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  const char *argv[] = {"sh", "-c", command_.c_str(), nullptr};
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr,
                             const_cast<char *const *>(argv), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(in_pipe[0]);
  close(out_pipe[1]);
  if (rc != 0) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    TransportFailure(fmt::format("cannot launch backend '{}': {}", command_, strerror(rc)));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

ChildProcessTransport::~ChildProcessTransport() { Shutdown(); }

void ChildProcessTransport::Shutdown() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    // Closing stdin asks the backend to exit; give it a moment, then kill.
    int status = 0;
    for (int i = 0; i < 200; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string ChildProcessTransport::RoundTrip(const std::string &request) {
  if (to_child_ < 0) TransportFailure("backend connection closed");
  std::string line = request;
  line += '\n';
  size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      TransportFailure(fmt::format("write to backend '{}' failed: {}", command_, strerror(errno)));
    }
    written += static_cast<size_t>(n);
  }

  char chunk[1 << 16];
  for (;;) {
    const size_t newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string response = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return response;
    }
    const ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      TransportFailure(fmt::format("read from backend '{}' failed: {}", command_, strerror(errno)));
    }
    if (n == 0) TransportFailure(fmt::format("backend '{}' closed its output", command_));
    buffer_.append(chunk, static_cast<size_t>(n));
  }
}

std::unique_ptr<Transport> OpenTransport(const std::string &spec) {
  if (spec.starts_with("cmd:")) {
    std::string command = spec.substr(4);
    if (command.empty()) throw BackendError(ErrorCode::kBadRequest, "empty backend command");
    return std::make_unique<ChildProcessTransport>(command);
  }
  if (spec.starts_with("http:")) {
    std::string url = spec.substr(5);
    if (url.starts_with("//")) url = "http:" + url;
    return std::make_unique<HttpTransport>(url);
  }
  throw BackendError(ErrorCode::kBadRequest,
                     fmt::format("backend must be cmd:<command> or http:<url>, got '{}'", spec));
}

}  // namespace bridgeprobe
