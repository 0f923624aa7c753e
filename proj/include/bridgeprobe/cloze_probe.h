// Zero-shot antecedent selection with "of [MASK]" cloze queries.

#ifndef BRIDGEPROBE_CLOZE_PROBE_H_
#define BRIDGEPROBE_CLOZE_PROBE_H_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bridgeprobe/backend_client.h"
#include "bridgeprobe/corpus.h"
#include "bridgeprobe/prediction.h"

namespace bridgeprobe {

enum class OfVariant { kWithOf, kWithoutOf };
enum class ScoringStrategy { kHeadWord, kFullPhrase, kFirstPieceOnly };

std::string_view Name(OfVariant variant);          // "with" | "without"
std::string_view Name(ScoringStrategy strategy);   // "head" | "phrase" | "first-piece"
OfVariant ParseOfVariant(std::string_view name);
ScoringStrategy ParseStrategy(std::string_view name);

inline constexpr std::string_view kMaskWord = "[MASK]";
inline constexpr uint64_t kDefaultSeed = 13;

// Half-open range of context word positions.
struct WordRange {
  int begin = 0;
  int end = 0;

  bool operator==(const WordRange &) const = default;
};

// Rendered context without the mask material. The mask material goes right
// after words[insert_after], the anaphor's head word.
struct ClozeQuery {
  std::vector<std::string> words;
  int insert_after = 0;
  OfVariant of_variant = OfVariant::kWithOf;
  WordRange anaphor;
  // Anaphor plus gold antecedents inside the context; sorted and disjoint.
  std::vector<WordRange> protected_spans;
  bool perturbed = false;
  uint64_t seed = 0;
};

ClozeQuery BuildClozeContext(const Document &document, const BridgingInstance &instance,
                             ContextScope scope, OfVariant variant);

// The query with ["of"] + k x [MASK] inserted.
std::vector<std::string> Render(const ClozeQuery &query, int k);

// Uniform draw from [0, n) by rejection on 32-bit outputs, so the sequence is
// identical on every standard library.
uint32_t BoundedDraw(std::mt19937 &rng, uint32_t n);

// Seeded Fisher-Yates over the unprotected positions, from the last position
// down. Requires the WithOf variant.
ClozeQuery PerturbContext(const ClozeQuery &query, uint64_t seed);

// Candidate surface words under a strategy. FirstPieceOnly renders the head
// word; ScoreCandidates keeps only its first piece.
std::vector<std::string> CandidateSurface(const Document &document, const Mention &mention,
                                          ScoringStrategy strategy);

// One joint score request per distinct piece count. Scores are in candidate
// order; `order` is the document-order rank. Throws BackendError(kOverflow)
// when the rendered context is too long.
std::vector<CandidateScore> ScoreCandidates(BackendClient &client, const ClozeQuery &query,
                                            const Document &document,
                                            const std::vector<const Mention *> &candidates,
                                            ScoringStrategy strategy);

struct ClozeSettings {
  ContextScope scope = ContextScope::kMoreContext;
  CandidateScope candidates = CandidateScope::kSalientNearby;
  OfVariant of_variant = OfVariant::kWithOf;
  bool perturb = false;
  uint64_t seed = kDefaultSeed;
  ScoringStrategy strategy = ScoringStrategy::kHeadWord;
};

// Builds, scores and decides one instance. Instances that cannot be scored
// come back with `skipped` set.
Prediction PredictCloze(BackendClient &client, const Corpus &corpus, const InstanceRef &ref,
                        const ClozeSettings &settings);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_CLOZE_PROBE_H_
