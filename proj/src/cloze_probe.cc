#include "bridgeprobe/cloze_probe.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

namespace bridgeprobe {

std::string_view Name(OfVariant variant) {
  return variant == OfVariant::kWithOf ? "with" : "without";
}

std::string_view Name(ScoringStrategy strategy) {
  switch (strategy) {
    case ScoringStrategy::kHeadWord:
      return "head";
    case ScoringStrategy::kFullPhrase:
      return "phrase";
    case ScoringStrategy::kFirstPieceOnly:
      break;
  }
  return "first-piece";
}

OfVariant ParseOfVariant(std::string_view name) {
  if (name == "with") return OfVariant::kWithOf;
  if (name == "without") return OfVariant::kWithoutOf;
  throw std::invalid_argument(fmt::format("unknown of variant '{}' (with|without)", name));
}

ScoringStrategy ParseStrategy(std::string_view name) {
  if (name == "head") return ScoringStrategy::kHeadWord;
  if (name == "phrase") return ScoringStrategy::kFullPhrase;
  if (name == "first-piece") return ScoringStrategy::kFirstPieceOnly;
  throw std::invalid_argument(
      fmt::format("unknown strategy '{}' (head|phrase|first-piece)", name));
}

ClozeQuery BuildClozeContext(const Document &document, const BridgingInstance &instance,
                             ContextScope scope, OfVariant variant) {
  const Mention &anaphor = document.mention(instance.anaphor);
  ClozeQuery query;
  query.of_variant = variant;

  // Rendered token range of each sentence; offset maps a token index to its
  // word position.
  struct Block {
    int sentence, first, last, offset;
  };
  std::vector<Block> rendered;
  if (scope == ContextScope::kAnaphorOnly) {
    rendered.push_back({anaphor.sentence, anaphor.first, anaphor.last, 0});
  } else {
    for (int s : ContextSentences(document, instance, scope)) {
      rendered.push_back({s, 0, document.sentences[s].size() - 1, 0});
    }
  }
  for (Block &p : rendered) {
    p.offset = static_cast<int>(query.words.size()) - p.first;
    for (int t = p.first; t <= p.last; ++t) {
      query.words.push_back(document.sentences[p.sentence].tokens[t].text);
    }
  }

  // Word range of a mention, if it is fully rendered.
  auto locate = [&](const Mention &m) -> std::optional<WordRange> {
    for (const Block &p : rendered) {
      if (p.sentence == m.sentence && p.first <= m.first && m.last <= p.last) {
        return WordRange{p.offset + m.first, p.offset + m.last + 1};
      }
    }
    return std::nullopt;
  };

  query.anaphor = *locate(anaphor);
  query.insert_after = query.anaphor.begin - anaphor.first +
                       SemanticHead(anaphor, document.sentences[anaphor.sentence]);

  std::vector<WordRange> spans{query.anaphor};
  for (const std::string &id : instance.antecedents) {
    if (auto range = locate(document.mention(id))) spans.push_back(*range);
  }
  std::sort(spans.begin(), spans.end(),
            [](const WordRange &a, const WordRange &b) { return a.begin < b.begin; });
  for (const WordRange &r : spans) {
    if (!query.protected_spans.empty() && r.begin < query.protected_spans.back().end) {
      query.protected_spans.back().end = std::max(query.protected_spans.back().end, r.end);
    } else {
      query.protected_spans.push_back(r);
    }
  }
  return query;
}

std::vector<std::string> Render(const ClozeQuery &query, int k) {
  std::vector<std::string> out(query.words.begin(), query.words.begin() + query.insert_after + 1);
  if (query.of_variant == OfVariant::kWithOf) out.emplace_back("of");
  for (int i = 0; i < k; ++i) out.emplace_back(kMaskWord);
  out.insert(out.end(), query.words.begin() + query.insert_after + 1, query.words.end());
  return out;
}

uint32_t BoundedDraw(std::mt19937 &rng, uint32_t n) {
  const uint64_t limit = ((uint64_t{1} << 32) / n) * n;
  while (true) {
    const uint64_t x = rng();
    if (x < limit) return static_cast<uint32_t>(x % n);
  }
}

ClozeQuery PerturbContext(const ClozeQuery &query, uint64_t seed) {
  if (query.of_variant != OfVariant::kWithOf) {
    throw std::invalid_argument("perturbation requires the \"of\" variant");
  }
  std::vector<int> free;
  size_t span = 0;
  for (int i = 0; i < static_cast<int>(query.words.size()); ++i) {
    while (span < query.protected_spans.size() && query.protected_spans[span].end <= i) ++span;
    if (span < query.protected_spans.size() && query.protected_spans[span].begin <= i) continue;
    free.push_back(i);
  }

  std::vector<std::string> values;
  for (int i : free) values.push_back(query.words[i]);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  for (size_t i = values.size(); i > 1; --i) {
    const uint32_t j = BoundedDraw(rng, static_cast<uint32_t>(i));
    std::swap(values[i - 1], values[j]);
  }

  ClozeQuery out = query;
  for (size_t n = 0; n < free.size(); ++n) out.words[free[n]] = values[n];
  out.perturbed = true;
  out.seed = seed;
  return out;
}

std::vector<std::string> CandidateSurface(const Document &document, const Mention &mention,
                                          ScoringStrategy strategy) {
  if (strategy == ScoringStrategy::kFullPhrase) return document.Words(mention);
  const Sentence &sentence = document.sentences[mention.sentence];
  return {sentence.tokens[SemanticHead(mention, sentence)].text};
}

std::vector<CandidateScore> ScoreCandidates(BackendClient &client, const ClozeQuery &query,
                                            const Document &document,
                                            const std::vector<const Mention *> &candidates,
                                            ScoringStrategy strategy) {
  if (candidates.empty()) throw std::invalid_argument("empty candidate list");

  std::map<std::vector<std::string>, std::vector<std::string>> piece_cache;
  std::vector<std::vector<std::string>> pieces_of;
  for (const Mention *m : candidates) {
    const std::vector<std::string> surface = CandidateSurface(document, *m, strategy);
    auto it = piece_cache.find(surface);
    if (it == piece_cache.end()) {
      const TokenAlignment alignment = client.Tokenize(surface);
      std::vector<std::string> pieces;
      for (const Piece &p : alignment.pieces()) {
        if (!p.special) pieces.push_back(p.text);
      }
      if (pieces.empty()) {
        throw BackendError(ErrorCode::kProtocol,
                           fmt::format("candidate '{}' tokenized to no pieces", m->id));
      }
      if (strategy == ScoringStrategy::kFirstPieceOnly) pieces.resize(1);
      it = piece_cache.emplace(surface, std::move(pieces)).first;
    }
    pieces_of.push_back(it->second);
  }

  std::vector<CandidateScore> out;
  for (size_t c = 0; c < candidates.size(); ++c) {
    out.push_back({candidates[c]->id, static_cast<int>(pieces_of[c].size()), 0.0,
                   document.OrderOf(candidates[c]->id)});
  }

  std::set<int> ks;
  for (const auto &p : pieces_of) ks.insert(static_cast<int>(p.size()));
  for (int k : ks) {
    const std::vector<std::string> words = Render(query, k);
    const TokenAlignment alignment = client.Tokenize(words);
    const int first_mask =
        query.insert_after + 1 + (query.of_variant == OfVariant::kWithOf ? 1 : 0);

    // Each mask word becomes exactly one mask piece.
    std::vector<std::string> pieces;
    std::vector<int> slots;
    for (int p = 0; p < alignment.size(); ++p) {
      const std::optional<int> w = alignment.word_of_piece(p);
      if (w && *w >= first_mask && *w < first_mask + k) {
        if (alignment.pieces_of_word(*w).begin != p) continue;
        slots.push_back(static_cast<int>(pieces.size()));
        pieces.push_back(client.descriptor().mask_token);
      } else {
        pieces.push_back(alignment.piece(p).text);
      }
    }

    std::vector<std::vector<std::string>> queries(k);
    for (size_t c = 0; c < candidates.size(); ++c) {
      if (static_cast<int>(pieces_of[c].size()) != k) continue;
      for (int s = 0; s < k; ++s) queries[s].push_back(pieces_of[c][s]);
    }
    for (auto &q : queries) {
      std::sort(q.begin(), q.end());
      q.erase(std::unique(q.begin(), q.end()), q.end());
    }

    const MaskScores scores = client.Score(pieces, slots, queries);
    for (size_t c = 0; c < candidates.size(); ++c) {
      if (static_cast<int>(pieces_of[c].size()) != k) continue;
      double sum = 0.0;
      for (int s = 0; s < k; ++s) {
        const std::optional<double> value = scores[s].at(pieces_of[c][s]);
        if (!value) {
          out[c].oov = true;
          break;
        }
        sum += *value;
      }
      out[c].score = out[c].oov ? -HUGE_VAL : sum / k;
    }
  }
  return out;
}

Prediction PredictCloze(BackendClient &client, const Corpus &corpus, const InstanceRef &ref,
                        const ClozeSettings &settings) {
  const Document &document = corpus.document(ref);
  const BridgingInstance &instance = corpus.instance(ref);

  Prediction p;
  p.anaphor_id = corpus.InstanceId(ref);
  p.scope = std::string(Name(settings.scope));
  p.candidate_scope = std::string(Name(settings.candidates));
  p.of_variant = std::string(Name(settings.of_variant));
  p.strategy = std::string(Name(settings.strategy));
  p.perturbed = settings.perturb;
  p.seed = settings.perturb ? settings.seed : 0;
  p.model = client.descriptor().name;
  p.distance = instance.sentence_distance;
  p.salient = instance.salient;
  p.gold = instance.antecedents;

  std::vector<const Mention *> candidates;
  try {
    candidates = BuildCandidates(document, document.mention(instance.anaphor),
                                 settings.candidates);
  } catch (const NoCandidatesError &) {
    p.skipped = "no candidates";
    return p;
  }

  ClozeQuery query = BuildClozeContext(document, instance, settings.scope, settings.of_variant);
  if (settings.perturb) query = PerturbContext(query, settings.seed);

  try {
    p.scores = ScoreCandidates(client, query, document, candidates, settings.strategy);
  } catch (const BackendError &e) {
    if (e.code() != ErrorCode::kOverflow) throw;
    p.skipped = "excluded: input size";
    return p;
  }
  try {
    Decide(p);
  } catch (const ScoringError &) {
    p.skipped = "scoring failure: every candidate is out of vocabulary";
  }
  return p;
}

}  // namespace bridgeprobe
