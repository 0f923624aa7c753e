#include "bridgeprobe/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "json.hpp"

namespace bridgeprobe {

using nlohmann::json;

namespace {

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <typename Set>
bool OneOf(const std::string &word, const Set &set) {
  return std::ranges::find(set, word) != std::end(set);
}

constexpr std::string_view kConjunctions[] = {"and", "or", "nor", "but", "&"};

constexpr std::string_view kBoundaries[] = {
    // prepositions
    "of", "in", "on", "at", "for", "from", "with", "by", "about", "against",
    "to", "into", "onto", "over", "under", "between", "among", "through",
    "during", "without", "within", "like", "after", "before", "since", "near",
    "per", "across", "toward", "towards", "upon", "around", "behind",
    "beyond", "including", "amid", "via",
    // relative pronouns
    "who", "whom", "whose", "which", "that", "where",
    // punctuation
    ",", "(", ":", ";"};

bool IsPunctuation(const std::string &word) {
  return !word.empty() && std::all_of(word.begin(), word.end(), [](char c) {
    return std::ispunct(static_cast<unsigned char>(c));
  });
}

[[noreturn]] void Invalid(const Document &doc, const std::string &what) {
  throw CorpusError(fmt::format("validation error in document '{}': {}",
                                doc.id, what));
}

}  // namespace

bool PrecedesInDocument(const Mention &a, const Mention &b) {
  return std::make_tuple(a.sentence, a.first, -a.last) <
         std::make_tuple(b.sentence, b.first, -b.last);
}

bool StartsBefore(const Mention &a, const Mention &b) {
  return std::make_pair(a.sentence, a.first) <
         std::make_pair(b.sentence, b.first);
}

void Document::Finalize() {
  if (id.empty()) throw CorpusError("validation error: document without id");

  for (size_t s = 0; s < sentences.size(); ++s) {
    Sentence &sentence = sentences[s];
    if (sentence.tokens.empty()) {
      Invalid(*this, fmt::format("sentence {} has no tokens", s));
    }
    int previous_end = 0;
    for (size_t t = 0; t < sentence.tokens.size(); ++t) {
      Token &token = sentence.tokens[t];
      token.index = static_cast<int>(t);
      if (token.char_start >= token.char_end) {
        Invalid(*this, fmt::format("sentence {} token {}: empty char range", s, t));
      }
      if (token.char_start < previous_end) {
        Invalid(*this, fmt::format("sentence {} token {}: overlaps previous token", s, t));
      }
      if (token.char_end > static_cast<int>(sentence.text.size())) {
        Invalid(*this, fmt::format("sentence {} token {}: char_end past sentence text", s, t));
      }
      previous_end = token.char_end;
    }
  }

  index_.clear();
  for (size_t i = 0; i < mentions.size(); ++i) {
    const Mention &m = mentions[i];
    if (m.id.empty()) Invalid(*this, fmt::format("mention {} has no id", i));
    if (m.sentence < 0 || m.sentence >= static_cast<int>(sentences.size())) {
      Invalid(*this, fmt::format("mention '{}': sentence {} out of range", m.id, m.sentence));
    }
    const int size = sentences[m.sentence].size();
    if (m.first < 0 || m.first > m.last || m.last >= size) {
      Invalid(*this, fmt::format("mention '{}': span [{}, {}] out of range", m.id, m.first, m.last));
    }
    if (m.head && (*m.head < m.first || *m.head > m.last)) {
      Invalid(*this, fmt::format("mention '{}': head {} outside span", m.id, *m.head));
    }
    index_.emplace_back(m.id, static_cast<int>(i));
  }
  std::sort(index_.begin(), index_.end());
  for (size_t i = 1; i < index_.size(); ++i) {
    if (index_[i].first == index_[i - 1].first) {
      Invalid(*this, fmt::format("duplicate mention id '{}'", index_[i].first));
    }
  }

  std::vector<int> by_position(mentions.size());
  for (size_t i = 0; i < by_position.size(); ++i) by_position[i] = static_cast<int>(i);
  std::stable_sort(by_position.begin(), by_position.end(), [this](int a, int b) {
    return PrecedesInDocument(mentions[a], mentions[b]);
  });
  order_.assign(mentions.size(), 0);
  for (size_t rank = 0; rank < by_position.size(); ++rank) {
    order_[by_position[rank]] = static_cast<int>(rank);
  }

  std::vector<std::string> anaphors;
  for (BridgingInstance &instance : instances) {
    const Mention *anaphor = FindMention(instance.anaphor);
    if (anaphor == nullptr) {
      Invalid(*this, fmt::format("dangling anaphor reference '{}'", instance.anaphor));
    }
    if (instance.antecedents.empty()) {
      Invalid(*this, fmt::format("anaphor '{}' has no antecedents", instance.anaphor));
    }
    anaphors.push_back(instance.anaphor);
    instance.sentence_distance = -1;
    instance.salient = false;
    for (const std::string &ante_id : instance.antecedents) {
      const Mention *ante = FindMention(ante_id);
      if (ante == nullptr) {
        Invalid(*this, fmt::format("dangling antecedent reference '{}' for anaphor '{}'",
                                   ante_id, instance.anaphor));
      }
      if (!StartsBefore(*ante, *anaphor)) {
        Invalid(*this, fmt::format("antecedent '{}' does not precede anaphor '{}'",
                                   ante_id, instance.anaphor));
      }
      const int distance = anaphor->sentence - ante->sentence;
      if (instance.sentence_distance < 0 || distance < instance.sentence_distance) {
        instance.sentence_distance = distance;
      }
      if (ante->sentence == 0) instance.salient = true;
    }
  }
  std::sort(anaphors.begin(), anaphors.end());
  auto dup = std::adjacent_find(anaphors.begin(), anaphors.end());
  if (dup != anaphors.end()) {
    Invalid(*this, fmt::format("anaphor '{}' annotated twice", *dup));
  }
}

const Mention *Document::FindMention(std::string_view id) const {
  auto it = std::lower_bound(
      index_.begin(), index_.end(), id,
      [](const std::pair<std::string, int> &entry, std::string_view key) {
        return entry.first < key;
      });
  if (it == index_.end() || it->first != id) return nullptr;
  return &mentions[it->second];
}

const Mention &Document::mention(std::string_view id) const {
  const Mention *m = FindMention(id);
  if (m == nullptr) {
    throw CorpusError(fmt::format("unknown mention '{}' in document '{}'", id, this->id));
  }
  return *m;
}

int Document::OrderOf(std::string_view id) const {
  const Mention &m = mention(id);
  return order_[&m - mentions.data()];
}

const Mention &Document::NearestAntecedent(const BridgingInstance &instance) const {
  const Mention *best = nullptr;
  for (const std::string &ante_id : instance.antecedents) {
    const Mention &m = mention(ante_id);
    if (best == nullptr || OrderOf(m.id) > OrderOf(best->id)) best = &m;
  }
  return *best;
}

std::vector<std::string> Document::Words(const Mention &mention) const {
  std::vector<std::string> words;
  const Sentence &sentence = sentences[mention.sentence];
  for (int t = mention.first; t <= mention.last; ++t) {
    words.push_back(sentence.tokens[t].text);
  }
  return words;
}

std::string Document::Surface(const Mention &mention) const {
  std::string out;
  for (const std::string &word : Words(mention)) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

int Corpus::num_mentions() const {
  int n = 0;
  for (const Document &doc : documents) n += static_cast<int>(doc.mentions.size());
  return n;
}

int Corpus::num_instances() const {
  int n = 0;
  for (const Document &doc : documents) n += static_cast<int>(doc.instances.size());
  return n;
}

std::vector<InstanceRef> Corpus::AllInstances() const {
  std::vector<InstanceRef> refs;
  for (size_t d = 0; d < documents.size(); ++d) {
    for (size_t i = 0; i < documents[d].instances.size(); ++i) {
      refs.push_back({static_cast<int>(d), static_cast<int>(i)});
    }
  }
  return refs;
}

std::string Corpus::InstanceId(const InstanceRef &ref) const {
  return document(ref).id + "/" + instance(ref).anaphor;
}

// ---------------------------------------------------------------------------
// Serialization

Document ParseDocument(std::string_view json_line) {
  json record = json::parse(json_line);
  Document doc;
  doc.id = record.at("id").get<std::string>();
  for (const json &s : record.at("sentences")) {
    Sentence sentence;
    sentence.text = s.at("text").get<std::string>();
    for (const json &t : s.at("tokens")) {
      Token token;
      token.text = t.at("text").get<std::string>();
      token.char_start = t.at("char_start").get<int>();
      token.char_end = t.at("char_end").get<int>();
      sentence.tokens.push_back(std::move(token));
    }
    doc.sentences.push_back(std::move(sentence));
  }
  for (const json &m : record.at("mentions")) {
    Mention mention;
    mention.id = m.at("id").get<std::string>();
    mention.sentence = m.at("sentence").get<int>();
    mention.first = m.at("first").get<int>();
    mention.last = m.at("last").get<int>();
    if (m.contains("head") && !m.at("head").is_null()) {
      mention.head = m.at("head").get<int>();
    }
    mention.is_np = m.value("is_np", true);
    doc.mentions.push_back(std::move(mention));
  }
  if (record.contains("bridging")) {
    for (const json &b : record.at("bridging")) {
      BridgingInstance instance;
      instance.anaphor = b.at("anaphor").get<std::string>();
      instance.antecedents = b.at("antecedents").get<std::vector<std::string>>();
      doc.instances.push_back(std::move(instance));
    }
  }
  doc.Finalize();
  return doc;
}

std::string SerializeDocument(const Document &doc) {
  json record = json::object();
  record["id"] = doc.id;
  json sentences = json::array();
  for (const Sentence &s : doc.sentences) {
    json tokens = json::array();
    for (const Token &t : s.tokens) {
      tokens.push_back({{"text", t.text}, {"char_start", t.char_start},
                        {"char_end", t.char_end}});
    }
    sentences.push_back({{"text", s.text}, {"tokens", std::move(tokens)}});
  }
  record["sentences"] = std::move(sentences);
  json mentions = json::array();
  for (const Mention &m : doc.mentions) {
    json entry = {{"id", m.id}, {"sentence", m.sentence}, {"first", m.first},
                  {"last", m.last}, {"is_np", m.is_np}};
    entry["head"] = m.head ? json(*m.head) : json(nullptr);
    mentions.push_back(std::move(entry));
  }
  record["mentions"] = std::move(mentions);
  json bridging = json::array();
  for (const BridgingInstance &b : doc.instances) {
    bridging.push_back({{"anaphor", b.anaphor}, {"antecedents", b.antecedents}});
  }
  record["bridging"] = std::move(bridging);
  return record.dump();
}

Corpus LoadCorpus(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw CorpusError(fmt::format("file not found: {}", path));
  Corpus corpus;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.documents.push_back(ParseDocument(line));
    } catch (const json::exception &e) {
      throw CorpusError(fmt::format("schema error at {}:{}: {}", path, line_number, e.what()));
    } catch (const CorpusError &e) {
      throw CorpusError(fmt::format("{}:{}: {}", path, line_number, e.what()));
    }
  }
  return corpus;
}

void SaveCorpus(const Corpus &corpus, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError(fmt::format("cannot write {}", path));
  for (const Document &doc : corpus.documents) out << SerializeDocument(doc) << '\n';
}

// ---------------------------------------------------------------------------
// Heads

int HeuristicHead(const Sentence &sentence, int first, int last) {
  auto word = [&](int t) { return Lower(sentence.tokens[t].text); };

  // First conjunct of a coordination.
  int end = last;
  for (int t = first + 1; t <= last; ++t) {
    if (OneOf(word(t), kConjunctions)) {
      end = t - 1;
      break;
    }
  }
  for (int t = first + 1; t <= end; ++t) {
    if (OneOf(word(t), kBoundaries)) return t - 1;
  }
  while (end > first && IsPunctuation(sentence.tokens[end].text)) --end;
  return end;
}

int SemanticHead(const Mention &mention, const Sentence &sentence) {
  if (mention.head) return *mention.head;
  return HeuristicHead(sentence, mention.first, mention.last);
}

// ---------------------------------------------------------------------------
// Scopes and candidates

std::string_view Name(CandidateScope scope) {
  return scope == CandidateScope::kSalientNearby ? "salient" : "all";
}

std::string_view Name(ContextScope scope) {
  switch (scope) {
    case ContextScope::kAnaphorOnly: return "anaphor";
    case ContextScope::kAnaphorSentence: return "sentence";
    case ContextScope::kAnteAnaSentence: return "ante-ana";
    case ContextScope::kMoreContext: return "more";
  }
  return "?";
}

CandidateScope ParseCandidateScope(std::string_view name) {
  if (name == "salient") return CandidateScope::kSalientNearby;
  if (name == "all") return CandidateScope::kAllPrevious;
  throw std::invalid_argument(fmt::format("unknown candidate scope '{}'", name));
}

ContextScope ParseContextScope(std::string_view name) {
  if (name == "anaphor") return ContextScope::kAnaphorOnly;
  if (name == "sentence") return ContextScope::kAnaphorSentence;
  if (name == "ante-ana") return ContextScope::kAnteAnaSentence;
  if (name == "more") return ContextScope::kMoreContext;
  throw std::invalid_argument(fmt::format("unknown context scope '{}'", name));
}

std::vector<const Mention *> BuildCandidates(const Document &document,
                                             const Mention &anaphor,
                                             CandidateScope scope) {
  std::vector<const Mention *> candidates;
  for (const Mention &m : document.mentions) {
    if (&m == &anaphor || !StartsBefore(m, anaphor) || anaphor.Contains(m)) {
      continue;
    }
    if (scope == CandidateScope::kSalientNearby) {
      const int back = anaphor.sentence - m.sentence;
      if (m.sentence != 0 && back > 2) continue;
    }
    candidates.push_back(&m);
  }
  if (candidates.empty()) {
    throw NoCandidatesError(fmt::format("no {} candidates for anaphor '{}' in '{}'",
                                        Name(scope), anaphor.id, document.id));
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Mention *a, const Mention *b) {
                     return PrecedesInDocument(*a, *b);
                   });
  return candidates;
}

std::vector<int> ContextSentences(const Document &document,
                                  const BridgingInstance &instance,
                                  ContextScope scope) {
  const int s = document.mention(instance.anaphor).sentence;
  std::vector<int> out;
  switch (scope) {
    case ContextScope::kAnaphorOnly:
    case ContextScope::kAnaphorSentence:
      out = {s};
      break;
    case ContextScope::kAnteAnaSentence:
      out = {document.NearestAntecedent(instance).sentence, s};
      break;
    case ContextScope::kMoreContext:
      out = {0, s - 2, s - 1, s};
      break;
  }
  std::erase_if(out, [](int x) { return x < 0; });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool AntecedentInContext(const Document &document,
                         const BridgingInstance &instance, ContextScope scope) {
  const Mention &anaphor = document.mention(instance.anaphor);
  const std::vector<int> sentences = ContextSentences(document, instance, scope);
  for (const std::string &ante_id : instance.antecedents) {
    const Mention &ante = document.mention(ante_id);
    if (scope == ContextScope::kAnaphorOnly) {
      if (anaphor.Contains(ante)) return true;
      continue;
    }
    if (std::binary_search(sentences.begin(), sentences.end(), ante.sentence)) {
      return true;
    }
  }
  return false;
}

bool Keep(const Document &document, const BridgingInstance &instance,
          const InstanceFilter &filter) {
  switch (filter.kind) {
    case InstanceFilter::Kind::kNpAntecedents:
      return std::any_of(instance.antecedents.begin(), instance.antecedents.end(),
                         [&](const std::string &id) {
                           return document.mention(id).is_np;
                         });
    case InstanceFilter::Kind::kInWindow: {
      const int s = document.mention(instance.anaphor).sentence;
      return std::any_of(instance.antecedents.begin(), instance.antecedents.end(),
                         [&](const std::string &id) {
                           const int a = document.mention(id).sentence;
                           return a == 0 || s - a <= 2;
                         });
    }
    case InstanceFilter::Kind::kAntecedentInContext:
      return AntecedentInContext(document, instance, filter.scope);
  }
  return false;
}

std::vector<InstanceRef> FilterInstances(const Corpus &corpus,
                                         std::vector<InstanceRef> instances,
                                         const InstanceFilter &filter) {
  std::erase_if(instances, [&](const InstanceRef &ref) {
    return !Keep(corpus.document(ref), corpus.instance(ref), filter);
  });
  return instances;
}

std::vector<InstanceRef> FilterInstances(const Corpus &corpus,
                                         const InstanceFilter &filter) {
  return FilterInstances(corpus, corpus.AllInstances(), filter);
}

// ---------------------------------------------------------------------------
// Distance buckets

std::string DistanceBucket(int distance, bool salient, BucketScheme scheme) {
  if (scheme == BucketScheme::kCloze) {
    if (salient) return "salient";
    if (distance <= 2) return std::to_string(distance);
    return ">2";
  }
  if (distance <= 2) return std::to_string(distance);
  if (distance <= 5) return "3-5";
  if (distance <= 10) return "6-10";
  return std::string(kExcludedBucket);
}

std::string DistanceBucket(const BridgingInstance &instance, BucketScheme scheme) {
  return DistanceBucket(instance.sentence_distance, instance.salient, scheme);
}

const std::vector<std::string> &BucketLabels(BucketScheme scheme) {
  static const std::vector<std::string> attention = {"0", "1", "2", "3-5", "6-10"};
  static const std::vector<std::string> cloze = {"salient", "0", "1", "2", ">2"};
  return scheme == BucketScheme::kCloze ? cloze : attention;
}

}  // namespace bridgeprobe
