// Language-model backend protocol: domain types and wire messages.
//
// Requests and responses are single-line JSON objects:
//   {"op": "tokenize"|"attn"|"score", "id": "...", ...}
//   {"id": "...", "ok": true, "payload": {...}}
//   {"id": "...", "ok": false, "error": {"code": "...", "message": "..."}}

#ifndef BRIDGEPROBE_PROTOCOL_H_
#define BRIDGEPROBE_PROTOCOL_H_

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace bridgeprobe {

enum class ErrorCode {
  kTransport,   // connection lost, child exited, HTTP failure
  kOverflow,    // input longer than the backend accepts
  kProtocol,    // malformed or invariant-violating message
  kBadRequest,  // backend rejected the request
};

std::string_view Name(ErrorCode code);

class BackendError : public std::runtime_error {
 public:
  BackendError(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct Piece {
  std::string text;
  bool special = false;

  bool operator==(const Piece &) const = default;
};

// Half-open range of piece indices.
struct PieceRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool empty() const { return end <= begin; }
};

// Map between caller words and backend pieces. Every non-special piece
// belongs to exactly one word and each word owns a contiguous piece range.
class TokenAlignment {
 public:
  TokenAlignment() = default;

  // Throws BackendError(kProtocol) when the invariants do not hold.
  TokenAlignment(std::vector<Piece> pieces,
                 std::vector<std::optional<int>> word_of_piece, int num_words);

  int size() const { return static_cast<int>(pieces_.size()); }
  int num_words() const { return static_cast<int>(ranges_.size()); }
  const std::vector<Piece> &pieces() const { return pieces_; }
  const Piece &piece(int p) const { return pieces_[p]; }
  std::optional<int> word_of_piece(int p) const { return word_of_piece_[p]; }
  PieceRange pieces_of_word(int w) const { return ranges_[w]; }

  // Number of non-special pieces.
  int num_content_pieces() const { return content_pieces_; }

  // Non-special piece texts of one word.
  std::vector<std::string> WordPieces(int w) const;

 private:
  std::vector<Piece> pieces_;
  std::vector<std::optional<int>> word_of_piece_;
  std::vector<PieceRange> ranges_;
  int content_pieces_ = 0;
};

// Layer x head x query x key attention weights, stored densely.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  AttentionTensor(int layers, int heads, int seq_len)
      : layers_(layers), heads_(heads), seq_len_(seq_len),
        weights_(static_cast<size_t>(layers) * heads * seq_len * seq_len, 0.0) {}

  int layers() const { return layers_; }
  int heads() const { return heads_; }
  int seq_len() const { return seq_len_; }

  double at(int layer, int head, int query, int key) const {
    return weights_[Offset(layer, head, query, key)];
  }
  double &at(int layer, int head, int query, int key) {
    return weights_[Offset(layer, head, query, key)];
  }

  const std::vector<double> &data() const { return weights_; }

  bool operator==(const AttentionTensor &) const = default;

 private:
  size_t Offset(int layer, int head, int query, int key) const {
    return ((static_cast<size_t>(layer) * heads_ + head) * seq_len_ + query) *
               seq_len_ + key;
  }

  int layers_ = 0;
  int heads_ = 0;
  int seq_len_ = 0;
  std::vector<double> weights_;
};

inline constexpr double kRowSumTolerance = 1e-4;

// Checks that every entry is in [0, 1] and every row sums to 1 within
// `tolerance`. Never repairs. Throws BackendError(kProtocol).
void ValidateAttention(const AttentionTensor &tensor,
                       double tolerance = kRowSumTolerance);

// Per mask slot: requested piece -> natural-log probability, or nullopt when
// the piece is outside the backend vocabulary.
using MaskScores = std::vector<std::map<std::string, std::optional<double>>>;

struct BackendDescriptor {
  std::string name;
  std::string address;
  int max_input_pieces = 0;  // 0 = unknown
  int layers = 0;            // 0 = not yet observed
  int heads = 0;
  std::string mask_token = "[MASK]";
};

nlohmann::json ToJson(const BackendDescriptor &descriptor);

// ---------------------------------------------------------------------------
// Wire messages

struct WordSpan {
  int start = 0;
  int end = 0;

  bool operator==(const WordSpan &) const = default;
};

struct TokenizeRequest {
  std::string id;
  std::string text;
  std::vector<WordSpan> words;

  bool operator==(const TokenizeRequest &) const = default;
};

struct AttnRequest {
  std::string id;
  std::string text;
  std::vector<WordSpan> words;

  bool operator==(const AttnRequest &) const = default;
};

struct ScoreRequest {
  std::string id;
  std::vector<std::string> pieces;
  std::vector<int> mask_slots;
  std::vector<std::vector<std::string>> queries;

  bool operator==(const ScoreRequest &) const = default;
};

using Request = std::variant<TokenizeRequest, AttnRequest, ScoreRequest>;

std::string_view OpName(const Request &request);
const std::string &RequestId(const Request &request);

struct PieceInfo {
  std::string text;
  bool special = false;
  std::optional<int> word;

  bool operator==(const PieceInfo &) const = default;
};

struct TokenizePayload {
  std::vector<PieceInfo> pieces;
  std::optional<int> max_input_pieces;
  std::optional<std::string> mask_token;

  bool operator==(const TokenizePayload &) const = default;
};

struct AttnPayload {
  std::vector<PieceInfo> pieces;
  AttentionTensor attention;

  bool operator==(const AttnPayload &) const = default;
};

struct ScorePayload {
  MaskScores scores;

  bool operator==(const ScorePayload &) const = default;
};

struct ErrorInfo {
  std::string code;
  std::string message;

  bool operator==(const ErrorInfo &) const = default;
};

// Wire error codes.
inline constexpr std::string_view kWireOverflow = "overflow";
inline constexpr std::string_view kWireBadRequest = "bad_request";
inline constexpr std::string_view kWireInternal = "internal";

struct Response {
  std::string id;
  std::variant<TokenizePayload, AttnPayload, ScorePayload, ErrorInfo> body;

  bool ok() const { return !std::holds_alternative<ErrorInfo>(body); }
  bool operator==(const Response &) const = default;
};

std::vector<std::string> SplitWhitespace(std::string_view text);

// Builds the request text and word spans for words joined by single spaces.
std::pair<std::string, std::vector<WordSpan>> JoinWords(
    const std::vector<std::string> &words);

nlohmann::json ToJson(const Request &request);
nlohmann::json ToJson(const Response &response);

// Both throw BackendError(kProtocol) on schema violations. Responses carry no
// op field, so the caller states which op it sent.
Request RequestFromJson(const nlohmann::json &message);
Response ResponseFromJson(const nlohmann::json &message, std::string_view op);

// Converts a wire alignment into a validated TokenAlignment.
TokenAlignment AlignmentFromPieces(const std::vector<PieceInfo> &pieces,
                                   int num_words);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_PROTOCOL_H_
