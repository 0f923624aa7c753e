#include <cmath>

#include "bridgeprobe/backend_client.h"
#include "bridgeprobe/http_server.h"
#include "bridgeprobe/mock_backend.h"
#include "doctest.h"
#include "test_util.h"

using namespace bridgeprobe;
using namespace bridgeprobe::testing;

namespace {

template <typename F>
ErrorCode CodeOf(F &&f) {
  try {
    f();
  } catch (const BackendError &e) {
    return e.code();
  }
  FAIL("expected a BackendError");
  return ErrorCode::kTransport;
}

std::vector<std::string> Texts(const TokenAlignment &a) {
  std::vector<std::string> out;
  for (const Piece &p : a.pieces()) out.push_back(p.text);
  return out;
}

// Transport that answers with a fixed line.
BackendClient CannedClient(std::string line) {
  return BackendClient(std::make_unique<LoopbackTransport>(
      [line](const std::string &) { return line; }));
}

}  // namespace

TEST_CASE("mock tokenization and word alignment") {
  BackendClient client = MockClient();
  const TokenAlignment a = client.Tokenize("playing chess");
  CHECK(Texts(a) == std::vector<std::string>{"[CLS]", "play", "##ing", "chess", "[SEP]"});
  CHECK(a.word_of_piece(1) == 0);
  CHECK(a.word_of_piece(2) == 0);
  CHECK(a.word_of_piece(3) == 1);
  CHECK_FALSE(a.word_of_piece(0).has_value());
  CHECK(a.piece(4).special);
  CHECK(client.descriptor().max_input_pieces == 512);
  CHECK(client.descriptor().mask_token == "[MASK]");
  CHECK(client.descriptor().address == "mock");

  const TokenAlignment empty = client.Tokenize(std::string_view(""));
  CHECK(empty.size() == 2);
  CHECK(empty.num_words() == 0);
}

TEST_CASE("uniform attention is exactly 1/T") {
  BackendClient client = MockClient("uniform");
  const AttentionResult r = client.Attentions({"the", "cat", "sat"});
  const int t = r.alignment.size();
  CHECK(t == 5);
  CHECK(r.attention.layers() == 12);
  CHECK(r.attention.heads() == 12);
  for (double w : r.attention.data()) CHECK(w == 1.0 / t);
  CHECK(client.descriptor().layers == 12);
}

TEST_CASE("onehot and random attention") {
  BackendClient onehot = MockClient("onehot:2");
  const AttentionResult r = onehot.Attentions({"a", "b", "c"});
  for (int i = 0; i < r.alignment.size(); ++i) {
    CHECK(r.attention.at(3, 4, i, 2) == 1.0);
    CHECK(r.attention.at(3, 4, i, 0) == 0.0);
  }
  CHECK(CodeOf([] { MockClient("onehot:9").Attentions({"a"}); }) == ErrorCode::kBadRequest);

  BackendClient random1 = MockClient("random:4");
  BackendClient random2 = MockClient("random:4");
  const AttentionResult a = random1.Attentions({"x", "y"});
  const AttentionResult b = random2.Attentions({"x", "y"});
  CHECK(a.attention == b.attention);
  CHECK_NOTHROW(ValidateAttention(a.attention));
  CHECK(a.attention.at(0, 0, 0, 0) != a.attention.at(0, 0, 0, 1));
}

TEST_CASE("broken attention is rejected, not repaired") {
  BackendClient client = MockClient("broken");
  CHECK(CodeOf([&] { client.Attentions({"a", "b"}); }) == ErrorCode::kProtocol);
}

TEST_CASE("delta and table scores") {
  BackendClient delta = MockClient("delta:firms");
  const MaskScores s = delta.Score({"[CLS]", "[MASK]", "[SEP]"}, {1}, {{"firms", "city"}});
  REQUIRE(s.size() == 1);
  CHECK(s[0].at("firms") == 0.0);
  CHECK(s[0].at("city") == kDeltaMissScore);

  // Multi-piece targets only hit with the matching number of slots.
  BackendClient delta2 = MockClient("delta:playing");
  const MaskScores two = delta2.Score({"[MASK]", "[MASK]"}, {0, 1}, {{"play"}, {"##ing"}});
  CHECK(two[0].at("play") == 0.0);
  CHECK(two[1].at("##ing") == 0.0);
  const MaskScores one = delta2.Score({"[MASK]"}, {0}, {{"play"}});
  CHECK(one[0].at("play") == kDeltaMissScore);

  TempDir dir;
  std::ofstream(dir / "t.json") << R"({"scores": {"firms": -1.5}, "default": -4.0})";
  BackendClient table = MockClient("table:" + (dir / "t.json"));
  const MaskScores t = table.Score({"[MASK]"}, {0}, {{"firms", "city"}});
  CHECK(t[0].at("firms") == -1.5);
  CHECK(t[0].at("city") == -4.0);

  BackendClient uniform = MockClient();
  CHECK(uniform.Score({"[MASK]"}, {0}, {{"a"}})[0].at("a") == doctest::Approx(-std::log(30522.0)));
}

TEST_CASE("out-of-vocabulary pieces score null") {
  MockOptions options;
  options.oov = {"zebra"};
  BackendClient client = MockClient(options);
  const MaskScores s = client.Score({"[MASK]"}, {0}, {{"zebra", "horse"}});
  CHECK_FALSE(s[0].at("zebra").has_value());
  CHECK(s[0].at("horse").has_value());
}

TEST_CASE("score request errors") {
  BackendClient client = MockClient();
  CHECK(CodeOf([&] { client.Score({"a"}, {}, {}); }) == ErrorCode::kBadRequest);
  CHECK(CodeOf([&] { client.Score({"a", "[MASK]"}, {0}, {{"x"}}); }) == ErrorCode::kBadRequest);
  CHECK(CodeOf([&] { client.Score({"[MASK]"}, {0}, {{"x"}, {"y"}}); }) ==
        ErrorCode::kBadRequest);
}

TEST_CASE("overflow is a distinct error") {
  MockOptions options;
  options.max_pieces = 4;
  BackendClient client = MockClient(options);
  CHECK_NOTHROW(client.Tokenize("a b"));
  CHECK(CodeOf([&] { client.Tokenize("a b c"); }) == ErrorCode::kOverflow);
  CHECK(CodeOf([&] { client.Attentions({"a", "b", "c"}); }) == ErrorCode::kOverflow);
  // Learned from the tokenize response, checked before sending.
  CHECK(client.descriptor().max_input_pieces == 4);
  CHECK(CodeOf([&] { client.Score({"a", "b", "c", "d", "[MASK]"}, {4}, {{"x"}}); }) ==
        ErrorCode::kOverflow);
}

TEST_CASE("malformed responses are protocol errors") {
  CHECK(CodeOf([] { CannedClient("not json").Tokenize("a"); }) == ErrorCode::kProtocol);
  CHECK(CodeOf([] {
          CannedClient(R"({"id":"99","ok":true,"payload":{"pieces":[]}})").Tokenize("a");
        }) == ErrorCode::kProtocol);
  // Word 0 owns no piece.
  CHECK(CodeOf([] {
          CannedClient(R"({"id":"1","ok":true,"payload":{"pieces":[
            {"text":"[CLS]","special":true,"word":null}]}})")
              .Tokenize("a");
        }) == ErrorCode::kProtocol);
  CHECK(CodeOf([] {
          CannedClient(R"({"id":"1","ok":true,"payload":{"scores":[{"x":0.5}]}})")
              .Score({"[MASK]"}, {0}, {{"x"}});
        }) == ErrorCode::kProtocol);
  CHECK(CodeOf([] {
          CannedClient(R"({"id":"1","ok":true,"payload":{"scores":[{}]}})")
              .Score({"[MASK]"}, {0}, {{"x"}});
        }) == ErrorCode::kProtocol);
  CHECK(CodeOf([] {
          CannedClient(R"({"id":"1","ok":false,"error":{"code":"overflow","message":"big"}})")
              .Tokenize("a");
        }) == ErrorCode::kOverflow);
}

TEST_CASE("mock responses are deterministic") {
  const MockBackend backend(MockOptions{});
  const std::string line = R"({"op":"attn","id":"a","text":"x y","words":[]})";
  CHECK(backend.HandleLine(line) == backend.HandleLine(line));
  const nlohmann::json bad = nlohmann::json::parse(backend.HandleLine("{oops"));
  CHECK(bad.at("ok") == false);
  CHECK(bad.at("error").at("code") == "bad_request");
}

TEST_CASE("child process transport against the mock server") {
  BackendClient client(OpenTransport("cmd:" + MockServerPath() + " --mode delta:firms"));
  CHECK(client.descriptor().address.starts_with("cmd:"));
  const TokenAlignment a = client.Tokenize("small firms");
  CHECK(a.size() == 4);
  const MaskScores s = client.Score({"[MASK]"}, {0}, {{"firms"}});
  CHECK(s[0].at("firms") == 0.0);
  const AttentionResult r = client.Attentions({"small", "firms"});
  CHECK(r.attention.at(0, 0, 0, 0) == 0.25);

  BackendClient dead(OpenTransport("cmd:true"));
  CHECK(CodeOf([&] { dead.Tokenize("a"); }) == ErrorCode::kTransport);
}

TEST_CASE("http transport against an in-process server") {
  const MockBackend backend(MockOptions{});
  HttpRpcServer server([&backend](const std::string &body) { return backend.HandleLine(body); });
  const int port = server.StartOnAnyPort();
  REQUIRE(port > 0);
  BackendClient client(OpenTransport("http://127.0.0.1:" + std::to_string(port)));
  CHECK(client.Tokenize("playing chess").size() == 5);
  CHECK(client.Attentions({"a"}).attention.at(0, 0, 1, 2) == doctest::Approx(1.0 / 3));
  server.Stop();
  CHECK(CodeOf([&] { client.Tokenize("a"); }) == ErrorCode::kTransport);
}

TEST_CASE("transport spec errors") {
  CHECK(CodeOf([] { OpenTransport("ftp:somewhere"); }) == ErrorCode::kBadRequest);
  CHECK(CodeOf([] { OpenTransport("cmd:"); }) == ErrorCode::kBadRequest);
}
