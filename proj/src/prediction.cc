#include "bridgeprobe/prediction.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "json.hpp"

namespace bridgeprobe {

using nlohmann::ordered_json;

size_t SelectBest(const std::vector<CandidateScore> &scores) {
  std::optional<size_t> best;
  for (size_t i = 0; i < scores.size(); ++i) {
    const CandidateScore &c = scores[i];
    if (!std::isfinite(c.score)) continue;
    if (!best || c.score > scores[*best].score ||
        (c.score == scores[*best].score && c.order > scores[*best].order)) {
      best = i;
    }
  }
  if (!best) throw ScoringError("no candidate has a finite score");
  return *best;
}

void Decide(Prediction &prediction) {
  const CandidateScore &best = prediction.scores[SelectBest(prediction.scores)];
  prediction.predicted = best.mention;
  prediction.correct = std::find(prediction.gold.begin(), prediction.gold.end(),
                                 best.mention) != prediction.gold.end();
}

std::string ToJsonLine(const Prediction &p) {
  ordered_json record;
  record["anaphor_id"] = p.anaphor_id;
  record["method"] = p.method;
  record["scope"] = p.scope;
  record["candidate_scope"] = p.candidate_scope;
  record["of_variant"] = p.of_variant;
  record["strategy"] = p.strategy;
  record["perturbed"] = p.perturbed;
  record["seed"] = p.seed;
  record["model"] = p.model;
  record["distance"] = p.distance;
  record["salient"] = p.salient;
  record["predicted"] = p.predicted ? ordered_json(*p.predicted) : ordered_json(nullptr);
  record["gold"] = p.gold;
  record["correct"] = p.correct;
  ordered_json scores = ordered_json::array();
  for (const CandidateScore &c : p.scores) {
    ordered_json entry;
    entry["mention"] = c.mention;
    entry["k"] = c.k;
    entry["score"] = std::isfinite(c.score) ? ordered_json(c.score) : ordered_json(nullptr);
    scores.push_back(std::move(entry));
  }
  record["scores"] = std::move(scores);
  if (p.skipped) record["skipped"] = *p.skipped;
  return record.dump();
}

Prediction PredictionFromJsonLine(const std::string &line) {
  const ordered_json record = ordered_json::parse(line);
  Prediction p;
  p.anaphor_id = record.at("anaphor_id").get<std::string>();
  p.method = record.value("method", "cloze");
  p.scope = record.value("scope", "");
  p.candidate_scope = record.value("candidate_scope", "");
  p.of_variant = record.value("of_variant", "");
  p.strategy = record.value("strategy", "");
  p.perturbed = record.value("perturbed", false);
  p.seed = record.value("seed", uint64_t{0});
  p.model = record.value("model", "");
  p.distance = record.value("distance", 0);
  p.salient = record.value("salient", false);
  if (record.contains("predicted") && !record.at("predicted").is_null()) {
    p.predicted = record.at("predicted").get<std::string>();
  }
  p.gold = record.at("gold").get<std::vector<std::string>>();
  p.correct = record.at("correct").get<bool>();
  if (record.contains("scores")) {
    int order = 0;
    for (const ordered_json &entry : record.at("scores")) {
      CandidateScore c;
      c.mention = entry.at("mention").get<std::string>();
      c.k = entry.value("k", 1);
      if (entry.at("score").is_null()) {
        c.score = -HUGE_VAL;
        c.oov = true;
      } else {
        c.score = entry.at("score").get<double>();
      }
      c.order = order++;
      p.scores.push_back(std::move(c));
    }
  }
  if (record.contains("skipped")) p.skipped = record.at("skipped").get<std::string>();
  return p;
}

std::vector<Prediction> LoadPredictions(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("file not found: " + path);
  std::vector<Prediction> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(PredictionFromJsonLine(line));
    } catch (const nlohmann::json::exception &e) {
      throw std::runtime_error(fmt::format("{}:{}: malformed prediction: {}", path,
                                           line_number, e.what()));
    }
  }
  return out;
}

void WritePredictions(const std::string &path, const std::vector<Prediction> &predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Prediction &p : predictions) out << ToJsonLine(p) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace bridgeprobe
