#include "bridgeprobe/protocol.h"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace bridgeprobe {

using nlohmann::json;

namespace {

[[noreturn]] void Malformed(const std::string &what) {
  throw BackendError(ErrorCode::kProtocol, "malformed message: " + what);
}

json PiecesToJson(const std::vector<PieceInfo> &pieces) {
  json out = json::array();
  for (const PieceInfo &p : pieces) {
    out.push_back({{"text", p.text},
                   {"special", p.special},
                   {"word", p.word ? json(*p.word) : json(nullptr)}});
  }
  return out;
}

std::vector<PieceInfo> PiecesFromJson(const json &array) {
  if (!array.is_array()) Malformed("pieces is not an array");
  std::vector<PieceInfo> pieces;
  for (const json &p : array) {
    PieceInfo info;
    info.text = p.at("text").get<std::string>();
    info.special = p.value("special", false);
    if (p.contains("word") && !p.at("word").is_null()) info.word = p.at("word").get<int>();
    pieces.push_back(std::move(info));
  }
  return pieces;
}

json WordsToJson(const std::vector<WordSpan> &words) {
  json out = json::array();
  for (const WordSpan &w : words) out.push_back({w.start, w.end});
  return out;
}

std::vector<WordSpan> WordsFromJson(const json &message) {
  std::vector<WordSpan> words;
  if (!message.contains("words")) return words;
  for (const json &w : message.at("words")) {
    if (!w.is_array() || w.size() != 2) Malformed("word span must be [start, end]");
    words.push_back({w[0].get<int>(), w[1].get<int>()});
  }
  return words;
}

json TensorToJson(const AttentionTensor &t) {
  json layers = json::array();
  for (int l = 0; l < t.layers(); ++l) {
    json heads = json::array();
    for (int h = 0; h < t.heads(); ++h) {
      json rows = json::array();
      for (int i = 0; i < t.seq_len(); ++i) {
        json row = json::array();
        for (int j = 0; j < t.seq_len(); ++j) row.push_back(t.at(l, h, i, j));
        rows.push_back(std::move(row));
      }
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  return layers;
}

AttentionTensor TensorFromJson(const json &payload, int seq_len) {
  const int layers = payload.at("layers").get<int>();
  const int heads = payload.at("heads").get<int>();
  const json &weights = payload.at("weights");
  if (layers <= 0 || heads <= 0) Malformed("non-positive layer/head count");
  if (!weights.is_array() || static_cast<int>(weights.size()) != layers) {
    Malformed("weights do not match layer count");
  }
  AttentionTensor tensor(layers, heads, seq_len);
  for (int l = 0; l < layers; ++l) {
    const json &hs = weights[l];
    if (!hs.is_array() || static_cast<int>(hs.size()) != heads) {
      Malformed(fmt::format("layer {} does not match head count", l));
    }
    for (int h = 0; h < heads; ++h) {
      const json &rows = hs[h];
      if (!rows.is_array() || static_cast<int>(rows.size()) != seq_len) {
        Malformed(fmt::format("head {}:{} does not have {} rows", l, h, seq_len));
      }
      for (int i = 0; i < seq_len; ++i) {
        const json &row = rows[i];
        if (!row.is_array() || static_cast<int>(row.size()) != seq_len) {
          Malformed(fmt::format("row {}:{}:{} does not have {} columns", l, h, i, seq_len));
        }
        for (int j = 0; j < seq_len; ++j) {
          if (!row[j].is_number()) Malformed("non-numeric attention weight");
          tensor.at(l, h, i, j) = row[j].get<double>();
        }
      }
    }
  }
  return tensor;
}

}  // namespace

std::string_view Name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kBadRequest: return "bad_request";
  }
  return "unknown";
}

TokenAlignment::TokenAlignment(std::vector<Piece> pieces,
                               std::vector<std::optional<int>> word_of_piece,
                               int num_words)
    : pieces_(std::move(pieces)),
      word_of_piece_(std::move(word_of_piece)),
      ranges_(num_words, PieceRange{}) {
  if (pieces_.size() != word_of_piece_.size()) {
    throw BackendError(ErrorCode::kProtocol, "alignment size mismatch");
  }
  std::vector<bool> seen(num_words, false);
  int previous_word = -1;
  for (int p = 0; p < size(); ++p) {
    const auto &word = word_of_piece_[p];
    if (pieces_[p].special) {
      if (word) {
        throw BackendError(ErrorCode::kProtocol,
                           fmt::format("special piece {} mapped to word {}", p, *word));
      }
      previous_word = -1;
      continue;
    }
    ++content_pieces_;
    if (!word || *word < 0 || *word >= num_words) {
      throw BackendError(ErrorCode::kProtocol,
                         fmt::format("piece {} ('{}') has no valid word", p, pieces_[p].text));
    }
    PieceRange &range = ranges_[*word];
    if (*word != previous_word) {
      if (seen[*word]) {
        throw BackendError(ErrorCode::kProtocol,
                           fmt::format("pieces of word {} are not contiguous", *word));
      }
      seen[*word] = true;
      range.begin = p;
    }
    range.end = p + 1;
    previous_word = *word;
  }
  for (int w = 0; w < num_words; ++w) {
    if (!seen[w]) throw BackendError(ErrorCode::kProtocol, fmt::format("word {} has no pieces", w));
  }
}

std::vector<std::string> TokenAlignment::WordPieces(int w) const {
  std::vector<std::string> out;
  const PieceRange range = ranges_[w];
  for (int p = range.begin; p < range.end; ++p) out.push_back(pieces_[p].text);
  return out;
}

void ValidateAttention(const AttentionTensor &t, double tolerance) {
  for (int l = 0; l < t.layers(); ++l) {
    for (int h = 0; h < t.heads(); ++h) {
      for (int i = 0; i < t.seq_len(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < t.seq_len(); ++j) {
          const double w = t.at(l, h, i, j);
          if (!(w >= 0.0 && w <= 1.0)) {
            throw BackendError(ErrorCode::kProtocol,
                               fmt::format("attention {}:{} [{}][{}] = {} outside [0, 1]",
                                           l + 1, h + 1, i, j, w));
          }
          sum += w;
        }
        if (std::fabs(sum - 1.0) > tolerance) {
          throw BackendError(ErrorCode::kProtocol,
                             fmt::format("attention row {}:{} [{}] sums to {}",
                                         l + 1, h + 1, i, sum));
        }
      }
    }
  }
}

json ToJson(const BackendDescriptor &d) {
  return {{"name", d.name},         {"address", d.address},
          {"max_input_pieces", d.max_input_pieces},
          {"layers", d.layers},     {"heads", d.heads},
          {"mask_token", d.mask_token}};
}

std::vector<std::string> SplitWhitespace(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) words.push_back(word);
  return words;
}

std::pair<std::string, std::vector<WordSpan>> JoinWords(
    const std::vector<std::string> &words) {
  std::string text;
  std::vector<WordSpan> spans;
  for (const std::string &w : words) {
    if (!text.empty()) text += ' ';
    const int start = static_cast<int>(text.size());
    text += w;
    spans.push_back({start, static_cast<int>(text.size())});
  }
  return {std::move(text), std::move(spans)};
}

std::string_view OpName(const Request &request) {
  switch (request.index()) {
    case 0: return "tokenize";
    case 1: return "attn";
    default: return "score";
  }
}

const std::string &RequestId(const Request &request) {
  return std::visit([](const auto &r) -> const std::string & { return r.id; }, request);
}

json ToJson(const Request &request) {
  json out = {{"op", OpName(request)}, {"id", RequestId(request)}};
  if (const auto *r = std::get_if<TokenizeRequest>(&request)) {
    out["text"] = r->text;
    out["words"] = WordsToJson(r->words);
  } else if (const auto *r = std::get_if<AttnRequest>(&request)) {
    out["text"] = r->text;
    out["words"] = WordsToJson(r->words);
  } else {
    const auto &s = std::get<ScoreRequest>(request);
    out["pieces"] = s.pieces;
    out["mask_slots"] = s.mask_slots;
    out["queries"] = s.queries;
  }
  return out;
}

Request RequestFromJson(const json &message) {
  try {
    if (!message.is_object()) Malformed("request is not an object");
    const std::string op = message.at("op").get<std::string>();
    const std::string id = message.at("id").get<std::string>();
    if (op == "tokenize") {
      return TokenizeRequest{id, message.at("text").get<std::string>(), WordsFromJson(message)};
    }
    if (op == "attn") {
      return AttnRequest{id, message.at("text").get<std::string>(), WordsFromJson(message)};
    }
    if (op == "score") {
      return ScoreRequest{id, message.at("pieces").get<std::vector<std::string>>(),
                          message.at("mask_slots").get<std::vector<int>>(),
                          message.at("queries").get<std::vector<std::vector<std::string>>>()};
    }
    Malformed("unknown op '" + op + "'");
  } catch (const json::exception &e) {
    Malformed(e.what());
  }
}

json ToJson(const Response &response) {
  json out = {{"id", response.id}, {"ok", response.ok()}};
  if (const auto *e = std::get_if<ErrorInfo>(&response.body)) {
    out["error"] = {{"code", e->code}, {"message", e->message}};
  } else if (const auto *p = std::get_if<TokenizePayload>(&response.body)) {
    json payload = {{"pieces", PiecesToJson(p->pieces)}};
    if (p->max_input_pieces) payload["max_input_pieces"] = *p->max_input_pieces;
    if (p->mask_token) payload["mask_token"] = *p->mask_token;
    out["payload"] = std::move(payload);
  } else if (const auto *p = std::get_if<AttnPayload>(&response.body)) {
    out["payload"] = {{"pieces", PiecesToJson(p->pieces)},
                      {"layers", p->attention.layers()},
                      {"heads", p->attention.heads()},
                      {"weights", TensorToJson(p->attention)}};
  } else {
    const auto &s = std::get<ScorePayload>(response.body);
    json slots = json::array();
    for (const auto &slot : s.scores) {
      json entry = json::object();
      for (const auto &[piece, score] : slot) {
        entry[piece] = score ? json(*score) : json(nullptr);
      }
      slots.push_back(std::move(entry));
    }
    out["payload"] = {{"scores", std::move(slots)}};
  }
  return out;
}

Response ResponseFromJson(const json &message, std::string_view op) {
  try {
    if (!message.is_object()) Malformed("response is not an object");
    Response response;
    response.id = message.at("id").get<std::string>();
    if (!message.at("ok").get<bool>()) {
      const json &error = message.at("error");
      response.body = ErrorInfo{error.at("code").get<std::string>(),
                                error.value("message", std::string())};
      return response;
    }
    const json &payload = message.at("payload");
    if (op == "tokenize") {
      TokenizePayload p;
      p.pieces = PiecesFromJson(payload.at("pieces"));
      if (payload.contains("max_input_pieces")) {
        p.max_input_pieces = payload.at("max_input_pieces").get<int>();
      }
      if (payload.contains("mask_token")) {
        p.mask_token = payload.at("mask_token").get<std::string>();
      }
      response.body = std::move(p);
    } else if (op == "attn") {
      AttnPayload p;
      p.pieces = PiecesFromJson(payload.at("pieces"));
      p.attention = TensorFromJson(payload, static_cast<int>(p.pieces.size()));
      response.body = std::move(p);
    } else if (op == "score") {
      ScorePayload p;
      for (const json &slot : payload.at("scores")) {
        if (!slot.is_object()) Malformed("score slot is not an object");
        std::map<std::string, std::optional<double>> entry;
        for (const auto &[piece, value] : slot.items()) {
          if (value.is_null()) {
            entry[piece] = std::nullopt;
          } else if (value.is_number()) {
            entry[piece] = value.get<double>();
          } else {
            Malformed("non-numeric score");
          }
        }
        p.scores.push_back(std::move(entry));
      }
      response.body = std::move(p);
    } else {
      Malformed("unknown op '" + std::string(op) + "'");
    }
    return response;
  } catch (const json::exception &e) {
    Malformed(e.what());
  }
}

TokenAlignment AlignmentFromPieces(const std::vector<PieceInfo> &pieces, int num_words) {
  std::vector<Piece> out;
  std::vector<std::optional<int>> words;
  for (const PieceInfo &p : pieces) {
    out.push_back({p.text, p.special});
    words.push_back(p.word);
  }
  return TokenAlignment(std::move(out), std::move(words), num_words);
}

}  // namespace bridgeprobe
