// Accuracy, breakdowns and report/heatmap rendering.

#ifndef BRIDGEPROBE_EVAL_H_
#define BRIDGEPROBE_EVAL_H_

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bridgeprobe/attention_probe.h"
#include "bridgeprobe/prediction.h"

namespace bridgeprobe {

struct ReportRow {
  std::string key;
  int n = 0;
  int correct = 0;

  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / n; }
};

enum class BreakdownKey {
  kClozeDistance,
  kAttentionDistance,
  kContextScope,
  kCandidateScope,
  kModel,
};

std::string_view Name(BreakdownKey key);
BreakdownKey ParseBreakdownKey(std::string_view name);

struct EvalReport {
  ReportRow overall{"all"};
  std::optional<BreakdownKey> breakdown_key;
  std::vector<ReportRow> breakdown;
  // Reason -> count, sorted by reason.
  std::vector<std::pair<std::string, int>> skipped;
  // Size of the wider instance set the accuracy is normalized over.
  std::optional<int> normalize_total;

  int num_skipped() const;
};

// Skipped predictions are counted apart and never enter a denominator.
// Throws std::invalid_argument when no prediction was scored.
EvalReport Accuracy(const std::vector<Prediction> &predictions);

// acc * n_used / n_total: the correct count over a wider denominator.
double NormalizeAccuracy(double accuracy, int n_used, int n_total);

// Cells partition the scored predictions. Distance keys follow bucket order,
// the rest are sorted by key. Throws std::invalid_argument when a prediction
// lacks the metadata the key needs.
std::vector<ReportRow> Breakdown(const std::vector<Prediction> &predictions,
                                 BreakdownKey key);

EvalReport Evaluate(const std::vector<Prediction> &predictions,
                    std::optional<BreakdownKey> key = std::nullopt,
                    std::optional<int> normalize_total = std::nullopt);

inline constexpr std::string_view kReportHeader = "key,n,correct,accuracy_pct";

std::string FormatReportCsv(const EvalReport &report);
std::string FormatReportTable(const EvalReport &report);

std::string FormatHeatmapCsv(const SignalMatrix &matrix);
// Heads on the x axis, layers on the y axis (layer 1 at the top).
std::string FormatHeatmapSvg(const SignalMatrix &matrix, std::string_view title);

// Writes `content` verbatim. Throws std::runtime_error if the path is not
// writable.
void WriteTextFile(const std::string &path, std::string_view content);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_EVAL_H_
