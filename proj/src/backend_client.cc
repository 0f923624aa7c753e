#include "bridgeprobe/backend_client.h"

#include <fmt/format.h>

namespace bridgeprobe {

using nlohmann::json;

BackendClient::BackendClient(std::unique_ptr<Transport> transport)
    : transport_(std::move(transport)) {
  descriptor_.address = transport_->address();
  descriptor_.name = descriptor_.address;
}

std::string BackendClient::NextId() { return std::to_string(++next_id_); }

Response BackendClient::Call(const Request &request) {
  const std::string line = transport_->RoundTrip(ToJson(request).dump());
  json message;
  try {
    message = json::parse(line);
  } catch (const json::exception &e) {
    throw BackendError(ErrorCode::kProtocol, fmt::format("unparsable response: {}", e.what()));
  }
  Response response = ResponseFromJson(message, OpName(request));
  if (response.id != RequestId(request)) {
    throw BackendError(ErrorCode::kProtocol,
                       fmt::format("response id '{}' does not match request id '{}'",
                                   response.id, RequestId(request)));
  }
  if (const auto *error = std::get_if<ErrorInfo>(&response.body)) {
    const ErrorCode code = error->code == kWireOverflow ? ErrorCode::kOverflow
                                                        : ErrorCode::kBadRequest;
    throw BackendError(code, fmt::format("backend error '{}': {}", error->code, error->message));
  }
  return response;
}

void BackendClient::CheckOverflow(int pieces) const {
  if (descriptor_.max_input_pieces > 0 && pieces > descriptor_.max_input_pieces) {
    throw BackendError(ErrorCode::kOverflow,
                       fmt::format("input of {} pieces exceeds backend limit {}", pieces,
                                   descriptor_.max_input_pieces));
  }
}

TokenAlignment BackendClient::Tokenize(const std::vector<std::string> &words) {
  auto [text, spans] = JoinWords(words);
  Response response = Call(TokenizeRequest{NextId(), std::move(text), std::move(spans)});
  const auto &payload = std::get<TokenizePayload>(response.body);
  if (payload.max_input_pieces) descriptor_.max_input_pieces = *payload.max_input_pieces;
  if (payload.mask_token) descriptor_.mask_token = *payload.mask_token;
  TokenAlignment alignment =
      AlignmentFromPieces(payload.pieces, static_cast<int>(words.size()));
  CheckOverflow(alignment.size());
  return alignment;
}

TokenAlignment BackendClient::Tokenize(std::string_view text) {
  return Tokenize(SplitWhitespace(text));
}

AttentionResult BackendClient::Attentions(const std::vector<std::string> &words) {
  auto [text, spans] = JoinWords(words);
  Response response = Call(AttnRequest{NextId(), std::move(text), std::move(spans)});
  auto &payload = std::get<AttnPayload>(response.body);
  AttentionResult result{
      AlignmentFromPieces(payload.pieces, static_cast<int>(words.size())),
      std::move(payload.attention)};
  CheckOverflow(result.alignment.size());
  const AttentionTensor &t = result.attention;
  if (descriptor_.layers == 0) {
    descriptor_.layers = t.layers();
    descriptor_.heads = t.heads();
  } else if (t.layers() != descriptor_.layers || t.heads() != descriptor_.heads) {
    throw BackendError(ErrorCode::kProtocol,
                       fmt::format("attention shape {}x{} differs from earlier {}x{}",
                                   t.layers(), t.heads(), descriptor_.layers,
                                   descriptor_.heads));
  }
  ValidateAttention(t);
  return result;
}

MaskScores BackendClient::Score(const std::vector<std::string> &pieces,
                                const std::vector<int> &mask_slots,
                                const std::vector<std::vector<std::string>> &queries) {
  if (mask_slots.empty()) {
    throw BackendError(ErrorCode::kBadRequest, "score request without mask slots");
  }
  if (queries.size() != mask_slots.size()) {
    throw BackendError(ErrorCode::kBadRequest, "one query list per mask slot required");
  }
  CheckOverflow(static_cast<int>(pieces.size()));
  Response response = Call(ScoreRequest{NextId(), pieces, mask_slots, queries});
  MaskScores scores = std::move(std::get<ScorePayload>(response.body).scores);
  if (scores.size() != mask_slots.size()) {
    throw BackendError(ErrorCode::kProtocol,
                       fmt::format("{} score slots returned for {} mask slots",
                                   scores.size(), mask_slots.size()));
  }
  for (size_t s = 0; s < scores.size(); ++s) {
    for (const std::string &piece : queries[s]) {
      auto it = scores[s].find(piece);
      if (it == scores[s].end()) {
        throw BackendError(ErrorCode::kProtocol,
                           fmt::format("no score for piece '{}' in slot {}", piece, s));
      }
      if (it->second && !(*it->second <= 0.0)) {
        throw BackendError(ErrorCode::kProtocol,
                           fmt::format("log-probability {} for '{}' is positive",
                                       *it->second, piece));
      }
    }
  }
  return scores;
}

}  // namespace bridgeprobe
