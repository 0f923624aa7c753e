// Deterministic mock backend. Speaks the line protocol on stdin/stdout, or
// HTTP with --http PORT.

#include <unistd.h>

#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bridgeprobe/http_server.h"
#include "bridgeprobe/mock_backend.h"

int main(int argc, char **argv) {
  CLI::App app{"Mock language-model backend.", "mockserver"};
  std::vector<std::string> modes;
  bridgeprobe::MockOptions options;
  int port = -1;
  std::string host = "127.0.0.1";
  app.add_option("--mode", modes,
                 "uniform | onehot:K | random:SEED | broken | delta:WORD | table:PATH "
                 "(repeatable)");
  app.add_option("--layers", options.layers)->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--heads", options.heads)->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--max-pieces", options.max_pieces)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--vocab-size", options.vocab_size)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--oov", options.oov, "Pieces to report as out of vocabulary (repeatable)");
  app.add_option("--http", port, "Serve HTTP on this port (0 picks one) instead of stdio");
  app.add_option("--host", host, "HTTP bind address")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    for (const std::string &mode : modes) options.ApplyMode(mode);
  } catch (const std::exception &e) {
    std::cerr << "mockserver: " << e.what() << '\n';
    return 2;
  }
  const bridgeprobe::MockBackend backend(options);

  if (port < 0) {
    std::ios::sync_with_stdio(false);
    bridgeprobe::ServeLines(backend, std::cin, std::cout);
    return 0;
  }
  bridgeprobe::HttpRpcServer server(
      [&backend](const std::string &body) { return backend.HandleLine(body); });
  if (port == 0) {
    std::cout << server.StartOnAnyPort(host) << std::endl;
    std::signal(SIGTERM, [](int) { std::_Exit(0); });
    std::signal(SIGINT, [](int) { std::_Exit(0); });
    while (true) pause();
  }
  std::signal(SIGTERM, [](int) { std::_Exit(0); });
  return server.Listen(host, port) ? 0 : 1;
}
