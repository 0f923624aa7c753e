// Client side of the backend protocol. Every response is validated before it
// is returned; malformed backend output is an error and is never repaired.

#ifndef BRIDGEPROBE_BACKEND_CLIENT_H_
#define BRIDGEPROBE_BACKEND_CLIENT_H_

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bridgeprobe/protocol.h"
#include "bridgeprobe/transport.h"

namespace bridgeprobe {

struct AttentionResult {
  TokenAlignment alignment;
  AttentionTensor attention;
};

class BackendClient {
 public:
  explicit BackendClient(std::unique_ptr<Transport> transport);

  // Word-aligned tokenization; words are joined by single spaces.
  TokenAlignment Tokenize(const std::vector<std::string> &words);
  // Whitespace-separated words.
  TokenAlignment Tokenize(std::string_view text);

  AttentionResult Attentions(const std::vector<std::string> &words);

  // Joint scoring of all mask slots in one backend pass.
  MaskScores Score(const std::vector<std::string> &pieces,
                   const std::vector<int> &mask_slots,
                   const std::vector<std::vector<std::string>> &queries);

  const BackendDescriptor &descriptor() const { return descriptor_; }

  // Sequence-piece limit used for client-side overflow checks (0 = none).
  void set_max_input_pieces(int n) { descriptor_.max_input_pieces = n; }

 private:
  Response Call(const Request &request);
  void CheckOverflow(int pieces) const;
  std::string NextId();

  std::unique_ptr<Transport> transport_;
  BackendDescriptor descriptor_;
  long next_id_ = 0;
};

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_BACKEND_CLIENT_H_
