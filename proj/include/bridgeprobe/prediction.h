// Antecedent predictions and the predictions file (one JSON record per line).

#ifndef BRIDGEPROBE_PREDICTION_H_
#define BRIDGEPROBE_PREDICTION_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bridgeprobe {

// Raised when no candidate has a finite score.
class ScoringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CandidateScore {
  std::string mention;
  int k = 1;
  // Mean log-probability; -infinity when a piece is out of vocabulary.
  double score = 0.0;
  // Document-order rank, used for tie-breaking. Not serialized.
  int order = 0;
  bool oov = false;
};

struct Prediction {
  std::string anaphor_id;  // "<doc id>/<mention id>"
  std::string method = "cloze";
  std::string scope;
  std::string candidate_scope;
  std::string of_variant;
  std::string strategy;
  bool perturbed = false;
  uint64_t seed = 0;
  std::string model;
  int distance = 0;
  bool salient = false;

  std::optional<std::string> predicted;
  std::vector<std::string> gold;
  bool correct = false;
  std::vector<CandidateScore> scores;

  // Set when the instance could not be scored; such records never count in
  // an accuracy denominator.
  std::optional<std::string> skipped;
};

// Index of the highest finite score; exact ties go to the candidate nearest
// the anaphor (largest order). Throws ScoringError if no score is finite.
size_t SelectBest(const std::vector<CandidateScore> &scores);

// Fills predicted/correct from the scores (ANY gold match).
void Decide(Prediction &prediction);

std::string ToJsonLine(const Prediction &prediction);
Prediction PredictionFromJsonLine(const std::string &line);

std::vector<Prediction> LoadPredictions(const std::string &path);
void WritePredictions(const std::string &path,
                      const std::vector<Prediction> &predictions);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_PREDICTION_H_
