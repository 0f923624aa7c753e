#include "bridgeprobe/mock_backend.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <cctype>

#include <fmt/format.h>

namespace bridgeprobe {

using nlohmann::json;

namespace {

constexpr std::string_view kSuffixes[] = {"ness", "ment", "ing", "ed"};
constexpr size_t kMinStem = 3;
constexpr std::string_view kMaskPiece = "[MASK]";

uint64_t Fnv1a(std::string_view data, uint64_t hash = 1469598103934665603ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

ErrorInfo BadRequest(const std::string &message) {
  return {std::string(kWireBadRequest), message};
}

bool InVocabulary(const std::string &piece) {
  return !piece.empty() && std::none_of(piece.begin(), piece.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c));
  });
}

}  // namespace

ScoreTable LoadScoreTable(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("file not found: " + path);
  json data = json::parse(in);
  ScoreTable table;
  for (const auto &[piece, value] : data.at("scores").items()) {
    table.scores[piece] = value.get<double>();
  }
  if (data.contains("default") && !data.at("default").is_null()) {
    table.fallback = data.at("default").get<double>();
  }
  return table;
}

void MockOptions::ApplyMode(const std::string &mode) {
  const size_t colon = mode.find(':');
  const std::string name = mode.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : mode.substr(colon + 1);
  auto need_arg = [&] {
    if (arg.empty()) throw std::invalid_argument("mode '" + name + "' needs an argument");
  };
  if (name == "uniform") {
    attention = Attention::kUniform;
    scores = Scores::kUniform;
  } else if (name == "onehot") {
    need_arg();
    attention = Attention::kOneHot;
    onehot_column = std::stoi(arg);
  } else if (name == "random") {
    need_arg();
    attention = Attention::kRandom;
    seed = std::stoull(arg);
  } else if (name == "broken") {
    attention = Attention::kBroken;
  } else if (name == "delta") {
    need_arg();
    scores = Scores::kDelta;
    delta_word = arg;
  } else if (name == "table") {
    need_arg();
    scores = Scores::kTable;
    table = LoadScoreTable(arg);
  } else {
    throw std::invalid_argument("unknown mock mode '" + mode + "'");
  }
}

std::vector<std::string> MockBackend::WordPieces(const std::string &word) const {
  if (word == kMaskPiece) return {word};
  for (std::string_view suffix : kSuffixes) {
    if (word.size() >= suffix.size() + kMinStem && word.ends_with(suffix)) {
      return {word.substr(0, word.size() - suffix.size()), "##" + std::string(suffix)};
    }
  }
  return {word};
}

std::vector<PieceInfo> MockBackend::Tokenize(const std::string &text,
                                             const std::vector<WordSpan> &words) const {
  std::vector<PieceInfo> pieces;
  pieces.push_back({"[CLS]", true, std::nullopt});
  for (size_t w = 0; w < words.size(); ++w) {
    const std::string word = text.substr(words[w].start, words[w].end - words[w].start);
    for (std::string &piece : WordPieces(word)) {
      pieces.push_back({std::move(piece), false, static_cast<int>(w)});
    }
  }
  pieces.push_back({"[SEP]", true, std::nullopt});
  return pieces;
}

AttentionTensor MockBackend::Attend(const std::vector<PieceInfo> &pieces) const {
  const int n = static_cast<int>(pieces.size());
  AttentionTensor t(options_.layers, options_.heads, n);
  uint64_t input_hash = Fnv1a("");
  for (const PieceInfo &p : pieces) input_hash = Fnv1a(p.text + '\x1f', input_hash);
  std::mt19937_64 rng(options_.seed ^ input_hash);

  for (int l = 0; l < t.layers(); ++l) {
    for (int h = 0; h < t.heads(); ++h) {
      for (int i = 0; i < n; ++i) {
        switch (options_.attention) {
          case MockOptions::Attention::kUniform:
            for (int j = 0; j < n; ++j) t.at(l, h, i, j) = 1.0 / n;
            break;
          case MockOptions::Attention::kOneHot:
            t.at(l, h, i, options_.onehot_column) = 1.0;
            break;
          case MockOptions::Attention::kBroken:
            for (int j = 0; j < n; ++j) t.at(l, h, i, j) = 1.1 / n;
            break;
          case MockOptions::Attention::kRandom: {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
              const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 + 1e-3;
              t.at(l, h, i, j) = u;
              sum += u;
            }
            for (int j = 0; j < n; ++j) t.at(l, h, i, j) /= sum;
            break;
          }
        }
      }
    }
  }
  return t;
}

std::optional<double> MockBackend::ScorePiece(const std::string &piece, int slot,
                                              int num_slots) const {
  if (!InVocabulary(piece) ||
      std::find(options_.oov.begin(), options_.oov.end(), piece) != options_.oov.end()) {
    return std::nullopt;
  }
  switch (options_.scores) {
    case MockOptions::Scores::kUniform:
      return -std::log(static_cast<double>(options_.vocab_size));
    case MockOptions::Scores::kDelta: {
      const std::vector<std::string> target = WordPieces(options_.delta_word);
      const bool hit = static_cast<int>(target.size()) == num_slots && target[slot] == piece;
      return hit ? 0.0 : kDeltaMissScore;
    }
    case MockOptions::Scores::kTable: {
      auto it = options_.table.scores.find(piece);
      if (it != options_.table.scores.end()) return it->second;
      return options_.table.fallback;
    }
  }
  return std::nullopt;
}

Response MockBackend::Handle(const Request &request) const {
  Response response;
  response.id = RequestId(request);

  auto tokenize = [&](const std::string &text, std::vector<WordSpan> words)
      -> std::optional<std::vector<PieceInfo>> {
    if (words.empty()) {
      auto [joined, spans] = JoinWords(SplitWhitespace(text));
      if (joined == text) words = std::move(spans);
      else if (!joined.empty()) {
        response.body = BadRequest("text without word spans must be single-spaced");
        return std::nullopt;
      }
    }
    int previous_end = 0;
    for (const WordSpan &w : words) {
      if (w.start < previous_end || w.end <= w.start ||
          w.end > static_cast<int>(text.size())) {
        response.body = BadRequest("word spans must be ordered, non-empty and inside text");
        return std::nullopt;
      }
      previous_end = w.end;
    }
    std::vector<PieceInfo> pieces = Tokenize(text, words);
    if (static_cast<int>(pieces.size()) > options_.max_pieces) {
      response.body = ErrorInfo{std::string(kWireOverflow),
                                fmt::format("{} pieces exceed limit {}", pieces.size(),
                                            options_.max_pieces)};
      return std::nullopt;
    }
    return pieces;
  };

  if (const auto *r = std::get_if<TokenizeRequest>(&request)) {
    auto pieces = tokenize(r->text, r->words);
    if (!pieces) return response;
    response.body = TokenizePayload{std::move(*pieces), options_.max_pieces,
                                    std::string(kMaskPiece)};
    return response;
  }
  if (const auto *r = std::get_if<AttnRequest>(&request)) {
    auto pieces = tokenize(r->text, r->words);
    if (!pieces) return response;
    if (options_.attention == MockOptions::Attention::kOneHot &&
        (options_.onehot_column < 0 ||
         options_.onehot_column >= static_cast<int>(pieces->size()))) {
      response.body = BadRequest(fmt::format("onehot column {} outside sequence of {}",
                                             options_.onehot_column, pieces->size()));
      return response;
    }
    AttentionTensor t = Attend(*pieces);
    response.body = AttnPayload{std::move(*pieces), std::move(t)};
    return response;
  }

  const auto &r = std::get<ScoreRequest>(request);
  if (r.mask_slots.empty()) {
    response.body = BadRequest("zero mask slots");
    return response;
  }
  if (r.queries.size() != r.mask_slots.size()) {
    response.body = BadRequest("queries must match mask slots");
    return response;
  }
  if (static_cast<int>(r.pieces.size()) > options_.max_pieces) {
    response.body = ErrorInfo{std::string(kWireOverflow),
                              fmt::format("{} pieces exceed limit {}", r.pieces.size(),
                                          options_.max_pieces)};
    return response;
  }
  for (int slot : r.mask_slots) {
    if (slot < 0 || slot >= static_cast<int>(r.pieces.size()) || r.pieces[slot] != kMaskPiece) {
      response.body = BadRequest(fmt::format("mask slot {} is not a mask piece", slot));
      return response;
    }
  }
  ScorePayload payload;
  const int k = static_cast<int>(r.mask_slots.size());
  for (int s = 0; s < k; ++s) {
    std::map<std::string, std::optional<double>> slot;
    for (const std::string &piece : r.queries[s]) slot[piece] = ScorePiece(piece, s, k);
    payload.scores.push_back(std::move(slot));
  }
  response.body = std::move(payload);
  return response;
}

std::string MockBackend::HandleLine(const std::string &line) const {
  json message;
  try {
    message = json::parse(line);
  } catch (const json::exception &e) {
    return ToJson(Response{"", BadRequest(std::string("unparsable request: ") + e.what())}).dump();
  }
  try {
    return ToJson(Handle(RequestFromJson(message))).dump();
  } catch (const BackendError &e) {
    std::string id;
    if (message.is_object() && message.contains("id") && message["id"].is_string()) {
      id = message["id"].get<std::string>();
    }
    return ToJson(Response{id, BadRequest(e.what())}).dump();
  }
}

void ServeLines(const MockBackend &backend, std::istream &in, std::ostream &out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << backend.HandleLine(line) << '\n';
    out.flush();
  }
}

}  // namespace bridgeprobe
