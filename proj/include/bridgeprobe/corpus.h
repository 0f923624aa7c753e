// Bridging-annotated corpus: data model, loading, validation and queries.

#ifndef BRIDGEPROBE_CORPUS_H_
#define BRIDGEPROBE_CORPUS_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bridgeprobe {

// Raised for malformed corpus files. The message carries document/line
// context.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an anaphor has no eligible antecedent candidates. Callers skip
// the instance and log it.
class NoCandidatesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Token {
  int index = 0;
  std::string text;
  int char_start = 0;
  int char_end = 0;
};

struct Sentence {
  std::string text;
  std::vector<Token> tokens;

  int size() const { return static_cast<int>(tokens.size()); }
};

// A gold mention. Token span is inclusive. The semantic head is optional in
// the file; SemanticHead() falls back to a heuristic when it is absent.
struct Mention {
  std::string id;
  int sentence = 0;
  int first = 0;
  int last = 0;
  std::optional<int> head;
  bool is_np = true;

  int length() const { return last - first + 1; }
  bool Contains(const Mention &other) const {
    return sentence == other.sentence && first <= other.first &&
           other.last <= last;
  }
};

// Document order: sentence, then first token, then wider spans first.
bool PrecedesInDocument(const Mention &a, const Mention &b);

// True if `a` starts strictly before `b`.
bool StartsBefore(const Mention &a, const Mention &b);

struct BridgingInstance {
  std::string anaphor;
  std::vector<std::string> antecedents;

  // Derived at load time.
  int sentence_distance = 0;
  bool salient = false;
};

class Document {
 public:
  std::string id;
  std::vector<Sentence> sentences;
  std::vector<Mention> mentions;
  std::vector<BridgingInstance> instances;

  // Builds the id index, derives instance distance/salience and checks every
  // invariant. Throws CorpusError.
  void Finalize();

  const Mention &mention(std::string_view id) const;
  const Mention *FindMention(std::string_view id) const;

  // Position of a mention in document order (0-based rank).
  int OrderOf(std::string_view id) const;

  // Gold antecedent closest to the anaphor (latest in document order).
  const Mention &NearestAntecedent(const BridgingInstance &instance) const;

  // Words of a mention span.
  std::vector<std::string> Words(const Mention &mention) const;
  std::string Surface(const Mention &mention) const;

 private:
  std::vector<std::pair<std::string, int>> index_;  // sorted by id
  std::vector<int> order_;                          // mention index -> rank
};

// Reference to one instance inside a corpus.
struct InstanceRef {
  int document = 0;
  int instance = 0;
};

class Corpus {
 public:
  std::vector<Document> documents;

  int num_documents() const { return static_cast<int>(documents.size()); }
  int num_mentions() const;
  int num_instances() const;

  std::vector<InstanceRef> AllInstances() const;

  const Document &document(const InstanceRef &ref) const {
    return documents[ref.document];
  }
  const BridgingInstance &instance(const InstanceRef &ref) const {
    return documents[ref.document].instances[ref.instance];
  }

  // Corpus-wide identifier: "<doc id>/<anaphor id>".
  std::string InstanceId(const InstanceRef &ref) const;
};

// Parses one document record (one line of a corpus file).
Document ParseDocument(std::string_view json_line);
std::string SerializeDocument(const Document &document);

Corpus LoadCorpus(const std::string &path);
void SaveCorpus(const Corpus &corpus, const std::string &path);

// Semantic head token index (sentence-relative) of a mention.
int SemanticHead(const Mention &mention, const Sentence &sentence);

// Head fallback used when a mention carries no head annotation: the first
// conjunct of a coordination, then the rightmost token before the first
// post-modifier boundary (preposition, relative pronoun, comma).
int HeuristicHead(const Sentence &sentence, int first, int last);

enum class CandidateScope { kSalientNearby, kAllPrevious };

// Which sentences accompany an anaphor in a rendered context.
enum class ContextScope {
  kAnaphorOnly,
  kAnaphorSentence,
  kAnteAnaSentence,
  kMoreContext,
};

std::string_view Name(CandidateScope scope);
std::string_view Name(ContextScope scope);
CandidateScope ParseCandidateScope(std::string_view name);
ContextScope ParseContextScope(std::string_view name);

// Candidate antecedents in document order. Throws NoCandidatesError when the
// set is empty.
std::vector<const Mention *> BuildCandidates(const Document &document,
                                             const Mention &anaphor,
                                             CandidateScope scope);

// Sentences making up the context for `instance` under `scope`, ascending
// and deduplicated. kAnaphorOnly yields the anaphor sentence; callers render
// only the anaphor span in that case.
std::vector<int> ContextSentences(const Document &document,
                                  const BridgingInstance &instance,
                                  ContextScope scope);

// True if some gold antecedent lies inside the context rendered for `scope`.
bool AntecedentInContext(const Document &document,
                         const BridgingInstance &instance, ContextScope scope);

struct InstanceFilter {
  enum class Kind { kNpAntecedents, kInWindow, kAntecedentInContext };
  Kind kind = Kind::kNpAntecedents;
  ContextScope scope = ContextScope::kMoreContext;

  static InstanceFilter NpAntecedents() { return {Kind::kNpAntecedents}; }
  static InstanceFilter InWindow() { return {Kind::kInWindow}; }
  static InstanceFilter InContext(ContextScope scope) {
    return {Kind::kAntecedentInContext, scope};
  }
};

bool Keep(const Document &document, const BridgingInstance &instance,
          const InstanceFilter &filter);

std::vector<InstanceRef> FilterInstances(const Corpus &corpus,
                                         std::vector<InstanceRef> instances,
                                         const InstanceFilter &filter);
std::vector<InstanceRef> FilterInstances(const Corpus &corpus,
                                         const InstanceFilter &filter);

enum class BucketScheme { kAttention, kCloze };

// Label for instances beyond the attention-scheme range.
inline constexpr std::string_view kExcludedBucket = ">10";

std::string DistanceBucket(const BridgingInstance &instance,
                           BucketScheme scheme);
std::string DistanceBucket(int sentence_distance, bool salient,
                           BucketScheme scheme);

// Bucket labels in report order.
const std::vector<std::string> &BucketLabels(BucketScheme scheme);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_CORPUS_H_
