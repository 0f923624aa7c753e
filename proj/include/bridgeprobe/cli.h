// Command-line driver: convert, attention, cloze, eval, report.

#ifndef BRIDGEPROBE_CLI_H_
#define BRIDGEPROBE_CLI_H_

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace bridgeprobe {

inline constexpr std::string_view kVersion = "0.1.0";

// Environment variable that may name the backend instead of --backend.
inline constexpr std::string_view kBackendEnv = "BRIDGEPROBE_BACKEND";

// Runs one command. `args` excludes the program name. Failures print a single
// JSON line {"error": {"code": ..., "message": ...}} to `err` and return
// nonzero: 2 for usage errors, 3 for backend errors, 1 otherwise.
int Run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_CLI_H_
