// Deterministic mock language-model backend. It answers protocol requests
// the way a real server would, with controllable attention and score
// distributions, so probe behavior can be checked against exact oracles.
//
// Attention modes:
//   uniform       every entry 1/T
//   onehot:K      every row puts all mass on column K
//   random:SEED   seeded row-stochastic weights (depend on seed and input)
//   broken        rows sum to 1.1 (for client validation tests)
// Score modes:
//   uniform       every in-vocabulary piece scores log(1/vocab_size)
//   delta:W       the pieces of W, at matching slots, score 0; anything else -30
//   table:PATH    scores read from a JSON table (see LoadScoreTable)
//
// Tokenization splits on the request word spans and peels one suffix from a
// fixed table ("playing" -> "play", "##ing"). [CLS] and [SEP] frame every
// sequence.

#ifndef BRIDGEPROBE_MOCK_BACKEND_H_
#define BRIDGEPROBE_MOCK_BACKEND_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bridgeprobe/protocol.h"

namespace bridgeprobe {

struct ScoreTable {
  std::map<std::string, double> scores;
  // Score for pieces missing from `scores`; unset means out of vocabulary.
  std::optional<double> fallback;
};

// {"scores": {"piece": logprob, ...}, "default": logprob}
ScoreTable LoadScoreTable(const std::string &path);

struct MockOptions {
  enum class Attention { kUniform, kOneHot, kRandom, kBroken };
  enum class Scores { kUniform, kDelta, kTable };

  Attention attention = Attention::kUniform;
  int onehot_column = 0;
  uint64_t seed = 0;

  Scores scores = Scores::kUniform;
  std::string delta_word;
  ScoreTable table;

  int layers = 12;
  int heads = 12;
  int max_pieces = 512;
  int vocab_size = 30522;
  // Pieces reported as out of vocabulary.
  std::vector<std::string> oov;

  // Applies one "--mode" value such as "onehot:3" or "delta:firms".
  void ApplyMode(const std::string &mode);
};

inline constexpr double kDeltaMissScore = -30.0;

class MockBackend {
 public:
  explicit MockBackend(MockOptions options = {}) : options_(std::move(options)) {}

  // Word pieces of one word, without specials.
  std::vector<std::string> WordPieces(const std::string &word) const;

  Response Handle(const Request &request) const;
  std::string HandleLine(const std::string &line) const;

  const MockOptions &options() const { return options_; }

 private:
  std::vector<PieceInfo> Tokenize(const std::string &text,
                                  const std::vector<WordSpan> &words) const;
  AttentionTensor Attend(const std::vector<PieceInfo> &pieces) const;
  std::optional<double> ScorePiece(const std::string &piece, int slot,
                                   int num_slots) const;

  MockOptions options_;
};

// Reads request lines from `in` and writes one response line each to `out`
// until end of input.
void ServeLines(const MockBackend &backend, std::istream &in, std::ostream &out);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_MOCK_BACKEND_H_
