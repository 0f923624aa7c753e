// Attention signals between bridging anaphors and their antecedents.

#ifndef BRIDGEPROBE_ATTENTION_PROBE_H_
#define BRIDGEPROBE_ATTENTION_PROBE_H_

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bridgeprobe/backend_client.h"
#include "bridgeprobe/corpus.h"
#include "bridgeprobe/prediction.h"
#include "bridgeprobe/protocol.h"

namespace bridgeprobe {

class UndefinedSignalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InputMode { kPairOnly, kFullSpan };
enum class Direction { kAnaphorToAntecedent, kAntecedentToAnaphor };

std::string_view Name(InputMode mode);       // "pair" | "full"
std::string_view Name(Direction direction);  // "ana2ante" | "ante2ana"
InputMode ParseInputMode(std::string_view name);

// Words fed to the model plus the positions of both head words.
struct ProbeInput {
  std::vector<std::string> words;
  std::vector<int> sentences;
  int anaphor_head = 0;
  int antecedent_head = 0;
  std::string antecedent;  // nearest gold antecedent id
};

// PairOnly: antecedent sentence + anaphor sentence. FullSpan: every sentence
// from the antecedent's through the anaphor's.
ProbeInput BuildInput(const Document &document, const BridgingInstance &instance,
                      InputMode mode);

// How w2 is normalized. The defaults give ratio 1 under uniform attention.
struct SignalDefinition {
  bool count_words = false;     // N = content words instead of pieces
  bool include_target = true;   // keep the target's own pieces in w2
};

struct Signal {
  double w1 = 0.0;
  double w2 = 0.0;
  double ratio = 0.0;
};

// Layer and head are 0-based. Throws UndefinedSignalError when w2 is zero and
// std::invalid_argument on bad indices or a word without pieces.
Signal ComputeSignal(const AttentionTensor &attention, const TokenAlignment &alignment,
                     int from_word, int to_word, int layer, int head,
                     const SignalDefinition &definition = {});

// Mean attention from the pieces of `from_word` into the pieces of `to_word`.
double MeanAttention(const AttentionTensor &attention, const TokenAlignment &alignment,
                     int from_word, int to_word, int layer, int head);

struct SignalRecord {
  std::string instance_id;
  Direction direction = Direction::kAnaphorToAntecedent;
  int layer = 1;  // 1-based
  int head = 1;   // 1-based
  double w1 = 0.0;
  double w2 = 0.0;
  double ratio = 0.0;
  std::string bucket;
  InputMode mode = InputMode::kPairOnly;
};

// All records for one instance, or the reason it was excluded.
struct InstanceSignals {
  std::string instance_id;
  std::string bucket;
  std::optional<std::string> excluded;
  std::vector<SignalRecord> records;
};

InstanceSignals ProbeSignals(BackendClient &client, const Corpus &corpus,
                             const InstanceRef &ref, InputMode mode,
                             const SignalDefinition &definition = {});

inline constexpr std::string_view kSignalsHeader =
    "instance_id,direction,layer,head,w1,w2,ratio,bucket,mode";
std::string SignalCsvRow(const SignalRecord &record);
// Inverse of SignalCsvRow (values keep the written precision).
SignalRecord ParseSignalCsvRow(std::string_view row);
std::vector<SignalRecord> LoadSignals(const std::string &path);

// L x H matrix of mean ratios; cells without records are absent.
class SignalMatrix {
 public:
  SignalMatrix(int layers, int heads);

  int layers() const { return layers_; }
  int heads() const { return heads_; }

  // Layer and head of the record are 1-based.
  void Add(const SignalRecord &record);
  // 0-based.
  std::optional<double> mean(int layer, int head) const;
  int count(int layer, int head) const;

 private:
  int layers_;
  int heads_;
  std::vector<std::vector<double>> cells_;
};

// Records must share one backend shape. A null bucket keeps every bucket.
SignalMatrix BuildSignalMatrix(const std::vector<SignalRecord> &records, int layers,
                               int heads, Direction direction,
                               const std::optional<std::string> &bucket);

struct HeadId {
  int layer = 1;  // 1-based
  int head = 1;

  bool operator==(const HeadId &) const = default;
};
using HeadSet = std::vector<HeadId>;

// "5:1,9:12,11:3,12:2-4" style lists.
HeadSet ParseHeadSet(std::string_view text);
std::string FormatHeadSet(const HeadSet &heads);
const HeadSet &DefaultProminentHeads();
// Throws std::invalid_argument if a head lies outside the tensor.
void CheckHeadSet(const HeadSet &heads, int layers, int heads_per_layer);

struct HeadCandidate {
  std::string mention;
  int head_word = 0;
  int order = 0;  // document-order rank
};

// Sum of anaphor-to-candidate w1 over `heads` for each candidate.
std::vector<double> ProminentHeadScores(const AttentionTensor &attention,
                                        const TokenAlignment &alignment,
                                        int anaphor_head_word,
                                        const std::vector<HeadCandidate> &candidates,
                                        const HeadSet &heads);

// Index of the best candidate; ties go to the one nearest the anaphor.
size_t ProminentHeadSelect(const AttentionTensor &attention,
                           const TokenAlignment &alignment, int anaphor_head_word,
                           const std::vector<HeadCandidate> &candidates,
                           const HeadSet &heads);

// Resolves one instance over the sentences that hold a candidate plus the
// anaphor sentence, joined in document order.
Prediction ResolveByProminentHeads(BackendClient &client, const Corpus &corpus,
                                   const InstanceRef &ref, CandidateScope scope,
                                   const HeadSet &heads);

enum class Difficulty { kEasy, kDifficult, kNeither };

inline constexpr double kEasyRatio = 0.7;
inline constexpr double kDifficultRatio = 0.1;

std::string_view Name(Difficulty difficulty);
Difficulty ClassifyDifficulty(double ratio);
inline Difficulty ClassifyDifficulty(const SignalRecord &record) {
  return ClassifyDifficulty(record.ratio);
}

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_ATTENTION_PROBE_H_
