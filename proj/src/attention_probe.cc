#include "bridgeprobe/attention_probe.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

namespace bridgeprobe {

namespace {

// Running mean m_k = m_{k-1} + (x_k - m_{k-1}) / k. A constant sequence
// yields that constant exactly, which a sum followed by a division does not.
class RunningMean {
 public:
  void Add(double x) {
    ++n_;
    mean_ += (x - mean_) / n_;
  }
  double mean() const { return mean_; }
  int count() const { return n_; }

 private:
  double mean_ = 0.0;
  int n_ = 0;
};

void CheckIndices(const AttentionTensor &attention, const TokenAlignment &alignment,
                  int from_word, int to_word, int layer, int head) {
  if (layer < 0 || layer >= attention.layers() || head < 0 || head >= attention.heads()) {
    throw std::invalid_argument(fmt::format("head {}:{} outside {}x{} tensor", layer + 1,
                                            head + 1, attention.layers(),
                                            attention.heads()));
  }
  if (attention.seq_len() != alignment.size()) {
    throw std::invalid_argument(fmt::format("tensor length {} does not match {} pieces",
                                            attention.seq_len(), alignment.size()));
  }
  for (int w : {from_word, to_word}) {
    if (w < 0 || w >= alignment.num_words()) {
      throw std::invalid_argument(fmt::format("word {} outside input of {} words", w,
                                              alignment.num_words()));
    }
    if (alignment.pieces_of_word(w).empty()) {
      throw std::invalid_argument(fmt::format("word {} has no pieces", w));
    }
  }
}

// r(j): attention from the pieces of `from` into piece j, averaged.
double RowMean(const AttentionTensor &attention, PieceRange from, int layer, int head,
               int j) {
  RunningMean r;
  for (int i = from.begin; i < from.end; ++i) r.Add(attention.at(layer, head, i, j));
  return r.mean();
}

double W1(const AttentionTensor &attention, PieceRange from, PieceRange to, int layer,
          int head) {
  RunningMean w1;
  for (int j = to.begin; j < to.end; ++j) w1.Add(RowMean(attention, from, layer, head, j));
  return w1.mean();
}

}  // namespace

std::string_view Name(InputMode mode) {
  return mode == InputMode::kPairOnly ? "pair" : "full";
}

std::string_view Name(Direction direction) {
  return direction == Direction::kAnaphorToAntecedent ? "ana2ante" : "ante2ana";
}

InputMode ParseInputMode(std::string_view name) {
  if (name == "pair") return InputMode::kPairOnly;
  if (name == "full") return InputMode::kFullSpan;
  throw std::invalid_argument(fmt::format("unknown input mode '{}' (pair|full)", name));
}

namespace {

// Concatenates whole sentences and locates the head words of the given
// mentions in the result.
struct Concatenation {
  std::vector<std::string> words;
  std::map<int, int> offset;  // sentence -> first word position

  Concatenation(const Document &document, const std::vector<int> &sentences) {
    for (int s : sentences) {
      offset[s] = static_cast<int>(words.size());
      for (const Token &t : document.sentences[s].tokens) words.push_back(t.text);
    }
  }

  int HeadWord(const Document &document, const Mention &m) const {
    return offset.at(m.sentence) + SemanticHead(m, document.sentences[m.sentence]);
  }
};

}  // namespace

ProbeInput BuildInput(const Document &document, const BridgingInstance &instance,
                      InputMode mode) {
  const Mention &anaphor = document.mention(instance.anaphor);
  const Mention &antecedent = document.NearestAntecedent(instance);
  ProbeInput input;
  input.antecedent = antecedent.id;
  if (mode == InputMode::kPairOnly) {
    input.sentences = {antecedent.sentence};
    if (anaphor.sentence != antecedent.sentence) input.sentences.push_back(anaphor.sentence);
  } else {
    for (int s = antecedent.sentence; s <= anaphor.sentence; ++s) input.sentences.push_back(s);
  }
  Concatenation joined(document, input.sentences);
  input.words = std::move(joined.words);
  input.anaphor_head = joined.HeadWord(document, anaphor);
  input.antecedent_head = joined.HeadWord(document, antecedent);
  return input;
}

double MeanAttention(const AttentionTensor &attention, const TokenAlignment &alignment,
                     int from_word, int to_word, int layer, int head) {
  CheckIndices(attention, alignment, from_word, to_word, layer, head);
  return W1(attention, alignment.pieces_of_word(from_word),
            alignment.pieces_of_word(to_word), layer, head);
}

Signal ComputeSignal(const AttentionTensor &attention, const TokenAlignment &alignment,
                     int from_word, int to_word, int layer, int head,
                     const SignalDefinition &definition) {
  CheckIndices(attention, alignment, from_word, to_word, layer, head);
  const PieceRange from = alignment.pieces_of_word(from_word);
  const PieceRange to = alignment.pieces_of_word(to_word);

  Signal signal;
  signal.w1 = W1(attention, from, to, layer, head);

  RunningMean total;
  for (int j = 0; j < alignment.size(); ++j) {
    if (alignment.piece(j).special) continue;
    if (!definition.include_target && j >= to.begin && j < to.end) continue;
    total.Add(RowMean(attention, from, layer, head, j));
  }
  signal.w2 = total.mean();
  if (definition.count_words) {
    const int words = alignment.num_words() - (definition.include_target ? 0 : 1);
    signal.w2 = words > 0 ? signal.w2 * total.count() / words : 0.0;
  }
  if (!(signal.w2 > 0.0)) {
    throw UndefinedSignalError(fmt::format("w2 is zero at head {}:{}", layer + 1, head + 1));
  }
  signal.ratio = signal.w1 / signal.w2;
  return signal;
}

InstanceSignals ProbeSignals(BackendClient &client, const Corpus &corpus,
                             const InstanceRef &ref, InputMode mode,
                             const SignalDefinition &definition) {
  const Document &document = corpus.document(ref);
  const BridgingInstance &instance = corpus.instance(ref);
  InstanceSignals out;
  out.instance_id = corpus.InstanceId(ref);
  out.bucket = DistanceBucket(instance, BucketScheme::kAttention);
  if (mode == InputMode::kFullSpan && out.bucket == kExcludedBucket) {
    out.excluded = "excluded: distance > 10";
    return out;
  }

  const ProbeInput input = BuildInput(document, instance, mode);
  AttentionResult result;
  try {
    result = client.Attentions(input.words);
  } catch (const BackendError &e) {
    if (e.code() != ErrorCode::kOverflow) throw;
    out.excluded = "excluded: input size";
    return out;
  }

  const AttentionTensor &t = result.attention;
  try {
    for (Direction direction :
         {Direction::kAnaphorToAntecedent, Direction::kAntecedentToAnaphor}) {
      const bool forward = direction == Direction::kAnaphorToAntecedent;
      const int from = forward ? input.anaphor_head : input.antecedent_head;
      const int to = forward ? input.antecedent_head : input.anaphor_head;
      for (int l = 0; l < t.layers(); ++l) {
        for (int h = 0; h < t.heads(); ++h) {
          const Signal s = ComputeSignal(t, result.alignment, from, to, l, h, definition);
          out.records.push_back(
              {out.instance_id, direction, l + 1, h + 1, s.w1, s.w2, s.ratio, out.bucket, mode});
        }
      }
    }
  } catch (const UndefinedSignalError &) {
    out.records.clear();
    out.excluded = "excluded: undefined signal";
  }
  return out;
}

std::string SignalCsvRow(const SignalRecord &r) {
  return fmt::format("{},{},{},{},{:.8f},{:.8f},{:.8f},{},{}", r.instance_id,
                     Name(r.direction), r.layer, r.head, r.w1, r.w2, r.ratio, r.bucket,
                     Name(r.mode));
}

SignalRecord ParseSignalCsvRow(std::string_view row) {
  std::vector<std::string> fields;
  size_t pos = 0;
  while (true) {
    const size_t comma = row.find(',', pos);
    fields.emplace_back(row.substr(pos, comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (fields.size() != 9) {
    throw std::invalid_argument(fmt::format("signal row needs 9 fields: '{}'", row));
  }
  SignalRecord r;
  r.instance_id = fields[0];
  if (fields[1] == Name(Direction::kAnaphorToAntecedent)) {
    r.direction = Direction::kAnaphorToAntecedent;
  } else if (fields[1] == Name(Direction::kAntecedentToAnaphor)) {
    r.direction = Direction::kAntecedentToAnaphor;
  } else {
    throw std::invalid_argument(fmt::format("unknown direction '{}'", fields[1]));
  }
  try {
    r.layer = std::stoi(fields[2]);
    r.head = std::stoi(fields[3]);
    r.w1 = std::stod(fields[4]);
    r.w2 = std::stod(fields[5]);
    r.ratio = std::stod(fields[6]);
  } catch (const std::logic_error &) {
    throw std::invalid_argument(fmt::format("bad number in signal row '{}'", row));
  }
  r.bucket = fields[7];
  r.mode = ParseInputMode(fields[8]);
  return r;
}

std::vector<SignalRecord> LoadSignals(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("file not found: " + path);
  std::vector<SignalRecord> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_number == 1 && line == kSignalsHeader)) continue;
    try {
      out.push_back(ParseSignalCsvRow(line));
    } catch (const std::invalid_argument &e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path, line_number, e.what()));
    }
  }
  return out;
}

SignalMatrix::SignalMatrix(int layers, int heads)
    : layers_(layers), heads_(heads), cells_(static_cast<size_t>(layers) * heads) {}

void SignalMatrix::Add(const SignalRecord &record) {
  if (record.layer < 1 || record.layer > layers_ || record.head < 1 || record.head > heads_) {
    throw std::invalid_argument(fmt::format("record head {}:{} outside {}x{} matrix",
                                            record.layer, record.head, layers_, heads_));
  }
  cells_[static_cast<size_t>(record.layer - 1) * heads_ + record.head - 1].push_back(
      record.ratio);
}

std::optional<double> SignalMatrix::mean(int layer, int head) const {
  std::vector<double> values = cells_[static_cast<size_t>(layer) * heads_ + head];
  if (values.empty()) return std::nullopt;
  // Sorting first makes the result independent of arrival order.
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

int SignalMatrix::count(int layer, int head) const {
  return static_cast<int>(cells_[static_cast<size_t>(layer) * heads_ + head].size());
}

SignalMatrix BuildSignalMatrix(const std::vector<SignalRecord> &records, int layers,
                               int heads, Direction direction,
                               const std::optional<std::string> &bucket) {
  SignalMatrix matrix(layers, heads);
  for (const SignalRecord &r : records) {
    if (r.direction != direction || (bucket && r.bucket != *bucket)) continue;
    matrix.Add(r);
  }
  return matrix;
}

namespace {

int ParsePositive(std::string_view text, std::string_view whole) {
  int value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || value < 1) {
    throw std::invalid_argument(fmt::format("bad head list '{}'", whole));
  }
  return value;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

}  // namespace

HeadSet ParseHeadSet(std::string_view text) {
  HeadSet heads;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view item = Trim(text.substr(pos, comma - pos));
    const size_t colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("bad head list '{}'", text));
    }
    const int layer = ParsePositive(item.substr(0, colon), text);
    const std::string_view range = item.substr(colon + 1);
    const size_t dash = range.find('-');
    const int first = ParsePositive(range.substr(0, dash), text);
    const int last =
        dash == std::string_view::npos ? first : ParsePositive(range.substr(dash + 1), text);
    if (last < first) throw std::invalid_argument(fmt::format("bad head list '{}'", text));
    for (int h = first; h <= last; ++h) heads.push_back({layer, h});
    pos = comma + 1;
  }
  return heads;
}

std::string FormatHeadSet(const HeadSet &heads) {
  std::string out;
  for (const HeadId &h : heads) {
    if (!out.empty()) out += ',';
    out += fmt::format("{}:{}", h.layer, h.head);
  }
  return out;
}

const HeadSet &DefaultProminentHeads() {
  static const HeadSet heads = ParseHeadSet("5:1,9:12,11:3,12:2-4");
  return heads;
}

void CheckHeadSet(const HeadSet &heads, int layers, int heads_per_layer) {
  for (const HeadId &h : heads) {
    if (h.layer < 1 || h.layer > layers || h.head < 1 || h.head > heads_per_layer) {
      throw std::invalid_argument(fmt::format("head {}:{} outside {}x{} model", h.layer,
                                              h.head, layers, heads_per_layer));
    }
  }
}

std::vector<double> ProminentHeadScores(const AttentionTensor &attention,
                                        const TokenAlignment &alignment,
                                        int anaphor_head_word,
                                        const std::vector<HeadCandidate> &candidates,
                                        const HeadSet &heads) {
  CheckHeadSet(heads, attention.layers(), attention.heads());
  std::vector<double> scores;
  for (const HeadCandidate &c : candidates) {
    double score = 0.0;
    for (const HeadId &h : heads) {
      score += MeanAttention(attention, alignment, anaphor_head_word, c.head_word,
                             h.layer - 1, h.head - 1);
    }
    scores.push_back(score);
  }
  return scores;
}

size_t ProminentHeadSelect(const AttentionTensor &attention,
                           const TokenAlignment &alignment, int anaphor_head_word,
                           const std::vector<HeadCandidate> &candidates,
                           const HeadSet &heads) {
  if (candidates.empty()) throw std::invalid_argument("empty candidate list");
  const std::vector<double> scores =
      ProminentHeadScores(attention, alignment, anaphor_head_word, candidates, heads);
  std::vector<CandidateScore> ranked;
  for (size_t i = 0; i < candidates.size(); ++i) {
    ranked.push_back({candidates[i].mention, 1, scores[i], candidates[i].order});
  }
  return SelectBest(ranked);
}

Prediction ResolveByProminentHeads(BackendClient &client, const Corpus &corpus,
                                   const InstanceRef &ref, CandidateScope scope,
                                   const HeadSet &heads) {
  const Document &document = corpus.document(ref);
  const BridgingInstance &instance = corpus.instance(ref);
  const Mention &anaphor = document.mention(instance.anaphor);

  Prediction p;
  p.anaphor_id = corpus.InstanceId(ref);
  p.method = "prominent-heads";
  p.candidate_scope = std::string(Name(scope));
  p.strategy = FormatHeadSet(heads);
  p.model = client.descriptor().name;
  p.distance = instance.sentence_distance;
  p.salient = instance.salient;
  p.gold = instance.antecedents;

  std::vector<const Mention *> candidates;
  try {
    candidates = BuildCandidates(document, anaphor, scope);
  } catch (const NoCandidatesError &) {
    p.skipped = "no candidates";
    return p;
  }

  // Sentences holding a candidate, plus the anaphor sentence.
  std::set<int> sentences{anaphor.sentence};
  for (const Mention *m : candidates) sentences.insert(m->sentence);
  const Concatenation joined(document, {sentences.begin(), sentences.end()});

  AttentionResult result;
  try {
    result = client.Attentions(joined.words);
  } catch (const BackendError &e) {
    if (e.code() != ErrorCode::kOverflow) throw;
    p.skipped = "excluded: input size";
    return p;
  }

  std::vector<HeadCandidate> heads_of;
  for (const Mention *m : candidates) {
    heads_of.push_back({m->id, joined.HeadWord(document, *m), document.OrderOf(m->id)});
  }
  const std::vector<double> scores =
      ProminentHeadScores(result.attention, result.alignment,
                          joined.HeadWord(document, anaphor), heads_of, heads);
  for (size_t i = 0; i < heads_of.size(); ++i) {
    p.scores.push_back({heads_of[i].mention, 1, scores[i], heads_of[i].order});
  }
  Decide(p);
  return p;
}

std::string_view Name(Difficulty difficulty) {
  switch (difficulty) {
    case Difficulty::kEasy:
      return "easy";
    case Difficulty::kDifficult:
      return "difficult";
    case Difficulty::kNeither:
      break;
  }
  return "neither";
}

Difficulty ClassifyDifficulty(double ratio) {
  if (ratio > kEasyRatio) return Difficulty::kEasy;
  if (ratio < kDifficultRatio) return Difficulty::kDifficult;
  return Difficulty::kNeither;
}

}  // namespace bridgeprobe
