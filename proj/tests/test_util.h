// Shared helpers for the unit and acceptance tests.

#ifndef BRIDGEPROBE_TESTS_TEST_UTIL_H_
#define BRIDGEPROBE_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bridgeprobe/backend_client.h"
#include "bridgeprobe/corpus.h"
#include "bridgeprobe/mock_backend.h"
#include "bridgeprobe/protocol.h"
#include "bridgeprobe/transport.h"

namespace bridgeprobe::testing {

inline std::string DataPath(const std::string &name) {
  return std::string(BP_DATA_DIR) + "/" + name;
}

inline std::string MockServerPath() { return BP_MOCKSERVER; }
inline std::string CliPath() { return BP_CLI; }

inline std::string ReadFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("bridgeprobe-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::string operator/(const std::string &name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Client talking to an in-process mock through serialized messages.
inline BackendClient MockClient(MockOptions options = {}) {
  auto backend = std::make_shared<MockBackend>(std::move(options));
  return BackendClient(std::make_unique<LoopbackTransport>(
      [backend](const std::string &line) { return backend->HandleLine(line); }, "mock"));
}

inline BackendClient MockClient(const std::string &mode) {
  MockOptions options;
  options.ApplyMode(mode);
  return MockClient(std::move(options));
}

// Alignment from piece specs: word index per piece, -1 for specials.
inline TokenAlignment MakeAlignment(const std::vector<int> &word_of_piece) {
  std::vector<Piece> pieces;
  std::vector<std::optional<int>> words;
  int num_words = 0;
  for (size_t p = 0; p < word_of_piece.size(); ++p) {
    const int w = word_of_piece[p];
    pieces.push_back({w < 0 ? "[S]" : "p" + std::to_string(p), w < 0});
    words.push_back(w < 0 ? std::nullopt : std::optional<int>(w));
    num_words = std::max(num_words, w + 1);
  }
  return TokenAlignment(std::move(pieces), std::move(words), num_words);
}

struct M {
  std::string id;
  int sentence = 0;
  int first = 0;
  int last = 0;
  std::optional<int> head = std::nullopt;
  bool is_np = true;
};

using Links = std::vector<std::pair<std::string, std::vector<std::string>>>;

// Document record from space-tokenized sentences, parsed and validated the
// same way a corpus line is.
inline std::string DocumentJson(const std::string &id, const std::vector<std::string> &sentences,
                                const std::vector<M> &mentions, const Links &links) {
  nlohmann::json doc;
  doc["id"] = id;
  doc["sentences"] = nlohmann::json::array();
  for (const std::string &text : sentences) {
    nlohmann::json tokens = nlohmann::json::array();
    int pos = 0;
    for (const std::string &word : SplitWhitespace(text)) {
      const int start = static_cast<int>(text.find(word, pos));
      tokens.push_back({{"text", word},
                        {"char_start", start},
                        {"char_end", start + static_cast<int>(word.size())}});
      pos = start + static_cast<int>(word.size());
    }
    doc["sentences"].push_back({{"text", text}, {"tokens", tokens}});
  }
  doc["mentions"] = nlohmann::json::array();
  for (const M &m : mentions) {
    nlohmann::json j = {{"id", m.id}, {"sentence", m.sentence}, {"first", m.first},
                        {"last", m.last}, {"is_np", m.is_np}};
    if (m.head) j["head"] = *m.head;
    doc["mentions"].push_back(j);
  }
  doc["bridging"] = nlohmann::json::array();
  for (const auto &[anaphor, antecedents] : links) {
    doc["bridging"].push_back({{"anaphor", anaphor}, {"antecedents", antecedents}});
  }
  return doc.dump();
}

inline Document MakeDocument(const std::string &id, const std::vector<std::string> &sentences,
                             const std::vector<M> &mentions, const Links &links) {
  return ParseDocument(DocumentJson(id, sentences, mentions, links));
}

inline Corpus MakeCorpus(std::vector<Document> documents) {
  Corpus corpus;
  corpus.documents = std::move(documents);
  return corpus;
}

}  // namespace bridgeprobe::testing

#endif  // BRIDGEPROBE_TESTS_TEST_UTIL_H_
