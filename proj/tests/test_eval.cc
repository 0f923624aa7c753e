#include <algorithm>
#include <random>

#include "bridgeprobe/eval.h"
#include "doctest.h"
#include "test_util.h"

using namespace bridgeprobe;
using namespace bridgeprobe::testing;

namespace {

Prediction Pred(std::string id, bool correct, int distance = 0, bool salient = false,
                std::string model = "mock") {
  Prediction p;
  p.anaphor_id = std::move(id);
  p.scope = "more";
  p.candidate_scope = "salient";
  p.model = std::move(model);
  p.distance = distance;
  p.salient = salient;
  p.predicted = "x";
  p.gold = {correct ? "x" : "y"};
  p.correct = correct;
  p.scores = {{"x", 1, -1.0, 0}};
  return p;
}

Prediction Skipped(std::string id, std::string reason) {
  Prediction p = Pred(std::move(id), false);
  p.predicted.reset();
  p.scores.clear();
  p.skipped = std::move(reason);
  return p;
}

std::vector<Prediction> RandomPredictions(std::mt19937 &rng, int n) {
  std::uniform_int_distribution<int> coin(0, 1), dist(0, 12), pick(0, 3);
  const std::vector<std::string> scopes{"anaphor", "sentence", "ante-ana", "more"};
  std::vector<Prediction> out;
  for (int i = 0; i < n; ++i) {
    Prediction p = Pred("d/" + std::to_string(i), coin(rng), dist(rng), pick(rng) == 0,
                        "m" + std::to_string(pick(rng)));
    p.scope = scopes[pick(rng)];
    p.candidate_scope = coin(rng) ? "salient" : "all";
    if (pick(rng) == 0) p = Skipped(p.anaphor_id, coin(rng) ? "no candidates" : "excluded: input size");
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy") {
  const EvalReport r = Accuracy({Pred("a", true), Pred("b", false), Pred("c", true)});
  CHECK(r.overall.n == 3);
  CHECK(r.overall.correct == 2);
  CHECK(r.overall.accuracy() == doctest::Approx(0.6667).epsilon(1e-4));

  CHECK(Accuracy({Pred("a", true), Pred("b", true)}).overall.accuracy() == 1.0);

  const EvalReport skipped =
      Accuracy({Pred("a", true), Skipped("b", "excluded: input size"), Pred("c", false)});
  CHECK(skipped.overall.n == 2);
  CHECK(skipped.overall.accuracy() == 0.5);
  CHECK(skipped.num_skipped() == 1);
  CHECK(skipped.skipped[0].first == "excluded: input size");

  CHECK_THROWS_AS(Accuracy({}), std::invalid_argument);
  CHECK_THROWS_AS(Accuracy({Skipped("a", "no candidates")}), std::invalid_argument);
}

TEST_CASE("normalized accuracy") {
  CHECK(NormalizeAccuracy(0.2990, 622, 663) == doctest::Approx(0.2805).epsilon(1e-4));
  CHECK(std::abs(NormalizeAccuracy(0.2990, 622, 663) - 0.2805) < 1e-4);
  CHECK(NormalizeAccuracy(0.5, 10, 20) == 0.25);
  CHECK(NormalizeAccuracy(0.37, 41, 41) == 0.37);
  CHECK_THROWS_AS(NormalizeAccuracy(0.5, 21, 20), std::invalid_argument);
  CHECK_THROWS_AS(NormalizeAccuracy(0.5, 0, 20), std::invalid_argument);

  double previous = 1.0;
  for (int total = 50; total <= 500; ++total) {
    const double v = NormalizeAccuracy(0.6, 50, total);
    CHECK(v <= previous);
    previous = v;
  }
}

TEST_CASE("golden report") {
  const std::vector<Prediction> preds = LoadPredictions(DataPath("golden_preds.jsonl"));
  const EvalReport report = Evaluate(preds, BreakdownKey::kClozeDistance);
  CHECK(FormatReportCsv(report) == ReadFile(DataPath("golden_report.csv")));
  CHECK(FormatReportCsv(report) == FormatReportCsv(Evaluate(preds, BreakdownKey::kClozeDistance)));

  const std::string table = FormatReportTable(report);
  CHECK(table.find("50.00") != std::string::npos);
  CHECK(table.find("skipped: excluded: input size") != std::string::npos);

  const std::string normalized = FormatReportCsv(Evaluate(preds, std::nullopt, 12));
  CHECK(normalized.find("normalized,12,3,25.0000\n") != std::string::npos);
}

TEST_CASE("golden heatmap") {
  const std::vector<SignalRecord> records = LoadSignals(DataPath("golden_signals.csv"));
  const SignalMatrix m =
      BuildSignalMatrix(records, 2, 3, Direction::kAnaphorToAntecedent, std::nullopt);
  CHECK(FormatHeatmapCsv(m) == ReadFile(DataPath("golden_heatmap_ana2ante_all.csv")));
}

TEST_CASE("all-zero 12x12 heatmap") {
  SignalMatrix m(12, 12);
  for (int l = 1; l <= 12; ++l)
    for (int h = 1; h <= 12; ++h) {
      SignalRecord r;
      r.layer = l;
      r.head = h;
      r.ratio = 0.0;
      m.Add(r);
    }
  const std::string csv = FormatHeatmapCsv(m);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "layer\\head,1,2,3,4,5,6,7,8,9,10,11,12");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.starts_with(std::to_string(rows) + ","));
    CHECK(std::count(line.begin(), line.end(), ',') == 12);
    std::string rest = line.substr(line.find(',') + 1);
    std::string expected = "0.0000";
    for (int i = 1; i < 12; ++i) expected += ",0.0000";
    CHECK(rest == expected);
  }
  CHECK(rows == 12);
}

TEST_CASE("heatmap svg puts heads on x and layers on y") {
  SignalMatrix m(2, 3);
  SignalRecord r;
  r.layer = 2;
  r.head = 3;
  r.ratio = 1.5;
  m.Add(r);
  const std::string svg = FormatHeatmapSvg(m, "ana2ante all");
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find("head") != std::string::npos);
  CHECK(svg.find("layer") != std::string::npos);
  CHECK(svg.find("ana2ante all") != std::string::npos);
  CHECK(svg == FormatHeatmapSvg(m, "ana2ante all"));
}

TEST_CASE("breakdowns") {
  const std::vector<Prediction> one{Pred("a", true, 1), Pred("b", false, 1), Pred("c", true, 1)};
  const std::vector<ReportRow> single = Breakdown(one, BreakdownKey::kClozeDistance);
  REQUIRE(single.size() == 1);
  CHECK(single[0].key == "1");
  CHECK(single[0].accuracy() == Accuracy(one).overall.accuracy());

  const std::vector<Prediction> mixed{Pred("a", true, 0), Pred("b", false, 4),
                                      Pred("c", true, 7, true), Pred("d", true, 12)};
  std::vector<std::string> keys;
  for (const ReportRow &r : Breakdown(mixed, BreakdownKey::kAttentionDistance)) keys.push_back(r.key);
  // Attention buckets go by distance alone.
  CHECK(keys == std::vector<std::string>{"0", "3-5", "6-10", ">10"});

  keys.clear();
  for (const ReportRow &r : Breakdown(mixed, BreakdownKey::kClozeDistance)) keys.push_back(r.key);
  CHECK(keys == std::vector<std::string>{"salient", "0", ">2"});

  Prediction no_model = Pred("e", true);
  no_model.model.clear();
  CHECK_THROWS_AS(Breakdown({no_model}, BreakdownKey::kModel), std::invalid_argument);

  CHECK(ParseBreakdownKey("context-scope") == BreakdownKey::kContextScope);
  CHECK(Name(BreakdownKey::kModel) == "model");
  CHECK_THROWS_AS(ParseBreakdownKey("colour"), std::invalid_argument);
}

TEST_CASE("breakdown cells match a brute-force partition") {
  std::mt19937 rng(77);
  const std::vector<Prediction> preds = RandomPredictions(rng, 400);
  for (BreakdownKey key : {BreakdownKey::kClozeDistance, BreakdownKey::kAttentionDistance,
                           BreakdownKey::kContextScope, BreakdownKey::kCandidateScope,
                           BreakdownKey::kModel}) {
    std::map<std::string, std::pair<int, int>> brute;
    for (const Prediction &p : preds) {
      if (p.skipped) continue;
      std::string cell;
      switch (key) {
        case BreakdownKey::kClozeDistance:
          cell = p.salient ? "salient" : p.distance <= 2 ? std::to_string(p.distance) : ">2";
          break;
        case BreakdownKey::kAttentionDistance:
          cell = p.distance <= 2 ? std::to_string(p.distance)
                 : p.distance <= 5 ? "3-5"
                 : p.distance <= 10 ? "6-10"
                                    : ">10";
          break;
        case BreakdownKey::kContextScope:
          cell = p.scope;
          break;
        case BreakdownKey::kCandidateScope:
          cell = p.candidate_scope;
          break;
        case BreakdownKey::kModel:
          cell = p.model;
          break;
      }
      brute[cell].first += 1;
      brute[cell].second += p.correct;
    }
    const std::vector<ReportRow> rows = Breakdown(preds, key);
    CHECK(rows.size() == brute.size());
    const EvalReport overall = Accuracy(preds);
    int total = 0;
    double weighted = 0.0;
    for (const ReportRow &r : rows) {
      REQUIRE(brute.count(r.key) == 1);
      CHECK(r.n == brute[r.key].first);
      CHECK(r.correct == brute[r.key].second);
      total += r.n;
      weighted += r.accuracy() * r.n;
    }
    CHECK(total == overall.overall.n);
    CHECK(std::abs(weighted / total - overall.overall.accuracy()) < 1e-12);
  }
}

TEST_CASE("reports are invariant to prediction order") {
  std::mt19937 rng(5);
  std::vector<Prediction> preds = RandomPredictions(rng, 200);
  const std::string base = FormatReportCsv(Evaluate(preds, BreakdownKey::kClozeDistance, 500));
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(preds.begin(), preds.end(), rng);
    CHECK(FormatReportCsv(Evaluate(preds, BreakdownKey::kClozeDistance, 500)) == base);
  }
}

TEST_CASE("unwritable report paths fail") {
  CHECK_THROWS_AS(WriteTextFile("/nonexistent-dir/x/report.csv", "x"), std::runtime_error);
  TempDir dir;
  WriteTextFile(dir / "r.csv", "a,b\n");
  CHECK(ReadFile(dir / "r.csv") == "a,b\n");
}
