#include <cstdlib>
#include <sstream>

#include "bridgeprobe/cli.h"
#include "bridgeprobe/prediction.h"
#include "doctest.h"
#include "test_util.h"

using namespace bridgeprobe;
using namespace bridgeprobe::testing;

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = 0;
  std::string out;
  std::string err;
};

Result Invoke(const std::vector<std::string> &args) {
  std::ostringstream out, err;
  Result r;
  r.status = Run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string Mock(const std::string &flags = "") {
  return "cmd:" + MockServerPath() + (flags.empty() ? "" : " " + flags);
}

nlohmann::json ErrorLine(const Result &r) {
  return nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
}

int Lines(const std::string &text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("eval on a missing file") {
  const Result r = Invoke({"eval", "--preds", "missing.jsonl"});
  CHECK(r.status != 0);
  const nlohmann::json e = ErrorLine(r);
  CHECK(e["error"]["code"] == "file_not_found");
  CHECK(e["error"]["message"].get<std::string>().find("file not found") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(Invoke({}).status == 2);
  CHECK(Invoke({"dance"}).status == 2);
  CHECK(Invoke({"eval"}).status == 2);
  CHECK(ErrorLine(Invoke({"eval", "--bogus"}))["error"]["code"] == "usage");

  TempDir dir;
  const Result perturb =
      Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--backend", Mock(), "--out",
              dir / "o", "--of", "without", "--perturb"});
  CHECK(perturb.status == 2);
  // Rejected before any output or backend launch.
  CHECK_FALSE(fs::exists(dir / "o"));

  const Result no_backend =
      Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--out", dir / "o"});
  if (!std::getenv(std::string(kBackendEnv).c_str())) CHECK(no_backend.status == 2);

  CHECK(Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--backend", Mock(), "--out",
                dir / "o", "--context-scope", "everything"})
            .status == 2);
  CHECK(Invoke({"--version"}).out.find(std::string(kVersion)) != std::string::npos);
}

TEST_CASE("cloze over the tiny corpus") {
  TempDir dir;
  const Result r = Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--backend",
                           Mock("--mode delta:firms"), "--context-scope", "more",
                           "--candidate-scope", "all", "--of", "with", "--seed", "7", "--out",
                           dir / "run"});
  REQUIRE(r.status == 0);
  const std::vector<Prediction> preds = LoadPredictions(dir / "run/predictions.jsonl");
  CHECK(preds.size() == 3);
  CHECK(preds[0].anaphor_id == "d1/m10");
  CHECK(preds[1].anaphor_id == "d1/m9");
  CHECK(preds[1].predicted == "m2");
  CHECK(preds[1].correct);
  CHECK(fs::exists(dir / "run/report.csv"));
  CHECK(r.out.find("all") != std::string::npos);

  const nlohmann::json manifest = nlohmann::json::parse(ReadFile(dir / "run/manifest.json"));
  CHECK(manifest["command"] == "cloze");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["context_scope"] == "more");
  CHECK(manifest["backend"]["address"].get<std::string>().starts_with("cmd:"));
  CHECK(manifest["counts"]["selected"] == 3);
}

TEST_CASE("reruns are byte-identical and inputs untouched") {
  TempDir dir;
  const std::string corpus_before = ReadFile(DataPath("tiny.bpc.json"));
  const std::string table = dir / "table.json";
  std::ofstream(table) << R"({"scores": {"firms": -0.5, "city": -0.7, "owners": -1.1}, "default": -6.0})";
  auto run_table = [&](const std::string &out, const std::string &jobs) {
    return Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--backend",
                   Mock("--mode table:" + table), "--perturb", "--jobs", jobs, "--out", out});
  };
  REQUIRE(run_table(dir / "a", "1").status == 0);
  REQUIRE(run_table(dir / "b", "1").status == 0);
  REQUIRE(run_table(dir / "c", "3").status == 0);
  for (const char *file : {"predictions.jsonl", "report.csv"}) {
    CHECK(ReadFile(dir / ("a/" + std::string(file))) == ReadFile(dir / ("b/" + std::string(file))));
    CHECK(ReadFile(dir / ("a/" + std::string(file))) == ReadFile(dir / ("c/" + std::string(file))));
  }
  CHECK(ReadFile(dir / "a/manifest.json") == ReadFile(dir / "b/manifest.json"));
  CHECK(ReadFile(DataPath("tiny.bpc.json")) == corpus_before);
}

TEST_CASE("backend from the environment") {
  TempDir dir;
  setenv(std::string(kBackendEnv).c_str(), Mock("--mode delta:firms").c_str(), 1);
  const Result r =
      Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--out", dir / "env"});
  unsetenv(std::string(kBackendEnv).c_str());
  CHECK(r.status == 0);
  CHECK(LoadPredictions(dir / "env/predictions.jsonl").size() == 3);
}

TEST_CASE("backend failures exit with the backend code") {
  TempDir dir;
  const Result r = Invoke({"cloze", "--corpus", DataPath("tiny.bpc.json"), "--backend",
                           "cmd:false", "--out", dir / "x"});
  CHECK(r.status == 3);
  CHECK(ErrorLine(r)["error"]["code"] == "backend");

  const Result broken = Invoke({"attention", "--corpus", DataPath("tiny.bpc.json"), "--backend",
                                Mock("--mode broken"), "--out", dir / "y"});
  CHECK(broken.status == 3);
  CHECK(ErrorLine(broken)["error"]["message"].get<std::string>().find("protocol") !=
        std::string::npos);
}

TEST_CASE("attention full span on the long-distance fixture") {
  TempDir dir;
  const Result r = Invoke({"attention", "--corpus", DataPath("far.bpc.json"), "--backend",
                           Mock("--layers 2 --heads 3"), "--mode", "full", "--out",
                           dir / "far"});
  REQUIRE(r.status == 0);
  CHECK(r.err.find(R"("event":"excluded")") != std::string::npos);
  CHECK(r.err.find("far/m2") != std::string::npos);
  CHECK(r.err.find("excluded: distance > 10") != std::string::npos);
  const nlohmann::json manifest = nlohmann::json::parse(ReadFile(dir / "far/manifest.json"));
  CHECK(manifest["counts"]["excluded"] == 1);
  CHECK(manifest["excluded"][0]["instance"] == "far/m2");
  // far/m3 is probed: 2 directions x 2 layers x 3 heads.
  CHECK(Lines(ReadFile(dir / "far/signals.csv")) == 1 + 12);
  CHECK(fs::exists(dir / "far/heatmap_ana2ante_6-10.csv"));
  CHECK(fs::exists(dir / "far/heatmap_ante2ana_all.csv"));
  CHECK(manifest["signal_definition"]["w2_denominator"] == "pieces");
}

TEST_CASE("attention with resolution, then report from its outputs") {
  TempDir dir;
  const Result r = Invoke({"attention", "--corpus", DataPath("tiny.bpc.json"), "--backend",
                           Mock(), "--resolve", "--svg", "--jobs", "2", "--out", dir / "att"});
  REQUIRE(r.status == 0);
  CHECK(Lines(ReadFile(dir / "att/signals.csv")) == 1 + 3 * 2 * 144);
  CHECK(LoadPredictions(dir / "att/predictions.jsonl").size() == 3);
  CHECK(fs::exists(dir / "att/heatmap_ana2ante_all.svg"));
  const std::string heatmap = ReadFile(dir / "att/heatmap_ana2ante_all.csv");
  CHECK(Lines(heatmap) == 13);
  CHECK(heatmap.find("1.0000") != std::string::npos);

  const Result rep = Invoke({"report", "--signals", dir / "att/signals.csv", "--preds",
                             dir / "att/predictions.jsonl", "--by", "attention-distance",
                             "--out", dir / "rep"});
  REQUIRE(rep.status == 0);
  CHECK(ReadFile(dir / "rep/heatmap_ana2ante_all.csv") == heatmap);
  CHECK(fs::exists(dir / "rep/report.txt"));

  const Result ev = Invoke({"eval", "--preds", dir / "att/predictions.jsonl", "--by", "model",
                            "--normalize-total", "6", "--out", dir / "ev"});
  REQUIRE(ev.status == 0);
  CHECK(ReadFile(dir / "ev/report.csv").find("normalized,6,") != std::string::npos);
}

TEST_CASE("convert a standoff corpus") {
  TempDir dir;
  const Result r = Invoke({"convert", "--input", DataPath("standoff"), "--out", dir / "conv"});
  REQUIRE(r.status == 0);
  const Corpus corpus = LoadCorpus(dir / "conv/corpus.bpc.json");
  CHECK(corpus.num_instances() == 2);
  CHECK(Lines(ReadFile(dir / "conv/conversion_log.tsv")) == 1);
  const nlohmann::json manifest = nlohmann::json::parse(ReadFile(dir / "conv/manifest.json"));
  CHECK(manifest["counts"]["dropped"] == 1);

  const Result missing = Invoke({"convert", "--input", dir / "nothing", "--out", dir / "x"});
  CHECK(missing.status == 1);
  CHECK(ErrorLine(missing)["error"]["code"] == "corpus");
}

TEST_CASE("installed binary") {
  TempDir dir;
  const std::string cmd = CliPath() + " eval --preds " + (dir / "none.jsonl") + " 2>" +
                          (dir / "err.txt");
  const int status = std::system(cmd.c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);
  CHECK(ReadFile(dir / "err.txt").find("file_not_found") != std::string::npos);
}
