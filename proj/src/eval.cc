#include "bridgeprobe/eval.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "bridgeprobe/corpus.h"

namespace bridgeprobe {

namespace {

constexpr std::pair<BreakdownKey, std::string_view> kKeyNames[] = {
    {BreakdownKey::kClozeDistance, "cloze-distance"},
    {BreakdownKey::kAttentionDistance, "attention-distance"},
    {BreakdownKey::kContextScope, "context-scope"},
    {BreakdownKey::kCandidateScope, "candidate-scope"},
    {BreakdownKey::kModel, "model"},
};

std::string KeyOf(const Prediction &p, BreakdownKey key) {
  auto require = [&](const std::string &value, std::string_view field) {
    if (value.empty()) {
      throw std::invalid_argument(
          fmt::format("prediction {} has no {} for breakdown", p.anaphor_id, field));
    }
    return value;
  };
  switch (key) {
    case BreakdownKey::kClozeDistance:
      return DistanceBucket(p.distance, p.salient, BucketScheme::kCloze);
    case BreakdownKey::kAttentionDistance:
      return DistanceBucket(p.distance, p.salient, BucketScheme::kAttention);
    case BreakdownKey::kContextScope:
      return require(p.scope, "scope");
    case BreakdownKey::kCandidateScope:
      return require(p.candidate_scope, "candidate_scope");
    case BreakdownKey::kModel:
      break;
  }
  return require(p.model, "model");
}

std::string Percent(const ReportRow &row, int decimals) {
  return fmt::format("{:.{}f}", 100.0 * row.accuracy(), decimals);
}

}  // namespace

std::string_view Name(BreakdownKey key) {
  for (const auto &[k, name] : kKeyNames) {
    if (k == key) return name;
  }
  return "";
}

BreakdownKey ParseBreakdownKey(std::string_view name) {
  for (const auto &[k, n] : kKeyNames) {
    if (n == name) return k;
  }
  throw std::invalid_argument(fmt::format("unknown breakdown key '{}'", name));
}

int EvalReport::num_skipped() const {
  int n = 0;
  for (const auto &[reason, count] : skipped) n += count;
  return n;
}

EvalReport Accuracy(const std::vector<Prediction> &predictions) {
  EvalReport report;
  std::map<std::string, int> skipped;
  for (const Prediction &p : predictions) {
    if (p.skipped) {
      ++skipped[*p.skipped];
      continue;
    }
    ++report.overall.n;
    if (p.correct) ++report.overall.correct;
  }
  if (report.overall.n == 0) {
    throw std::invalid_argument(predictions.empty() ? "empty prediction set"
                                                    : "every prediction was skipped");
  }
  report.skipped.assign(skipped.begin(), skipped.end());
  return report;
}

double NormalizeAccuracy(double accuracy, int n_used, int n_total) {
  if (n_used <= 0 || n_total <= 0) {
    throw std::invalid_argument("instance counts must be positive");
  }
  if (n_used > n_total) {
    throw std::invalid_argument(
        fmt::format("used instances ({}) exceed the total ({})", n_used, n_total));
  }
  return accuracy * n_used / n_total;
}

std::vector<ReportRow> Breakdown(const std::vector<Prediction> &predictions,
                                 BreakdownKey key) {
  std::map<std::string, ReportRow> cells;
  for (const Prediction &p : predictions) {
    if (p.skipped) continue;
    const std::string k = KeyOf(p, key);
    ReportRow &row = cells[k];
    row.key = k;
    ++row.n;
    if (p.correct) ++row.correct;
  }

  std::vector<ReportRow> rows;
  if (key == BreakdownKey::kClozeDistance || key == BreakdownKey::kAttentionDistance) {
    std::vector<std::string> order = BucketLabels(key == BreakdownKey::kClozeDistance
                                                      ? BucketScheme::kCloze
                                                      : BucketScheme::kAttention);
    if (key == BreakdownKey::kAttentionDistance) order.emplace_back(kExcludedBucket);
    for (const std::string &label : order) {
      auto it = cells.find(label);
      if (it != cells.end()) rows.push_back(it->second);
    }
  } else {
    for (const auto &[k, row] : cells) rows.push_back(row);
  }
  return rows;
}

EvalReport Evaluate(const std::vector<Prediction> &predictions,
                    std::optional<BreakdownKey> key, std::optional<int> normalize_total) {
  EvalReport report = Accuracy(predictions);
  if (key) {
    report.breakdown_key = key;
    report.breakdown = Breakdown(predictions, *key);
  }
  if (normalize_total) {
    NormalizeAccuracy(report.overall.accuracy(), report.overall.n, *normalize_total);
    report.normalize_total = normalize_total;
  }
  return report;
}

std::string FormatReportCsv(const EvalReport &report) {
  std::string out = fmt::format("{}\n", kReportHeader);
  auto row = [&](const ReportRow &r) {
    out += fmt::format("{},{},{},{}\n", r.key, r.n, r.correct, Percent(r, 4));
  };
  row(report.overall);
  if (report.normalize_total) {
    const double normalized = NormalizeAccuracy(report.overall.accuracy(), report.overall.n,
                                                *report.normalize_total);
    out += fmt::format("normalized,{},{},{:.4f}\n", *report.normalize_total,
                       report.overall.correct, 100.0 * normalized);
  }
  for (const ReportRow &r : report.breakdown) row(r);
  for (const auto &[reason, count] : report.skipped) {
    out += fmt::format("skipped: {},{},,\n", reason, count);
  }
  return out;
}

std::string FormatReportTable(const EvalReport &report) {
  std::vector<std::array<std::string, 4>> rows;
  rows.push_back({"key", "n", "correct", "accuracy"});
  auto add = [&](const ReportRow &r) {
    rows.push_back({r.key, std::to_string(r.n), std::to_string(r.correct), Percent(r, 2)});
  };
  add(report.overall);
  if (report.normalize_total) {
    const double normalized = NormalizeAccuracy(report.overall.accuracy(), report.overall.n,
                                                *report.normalize_total);
    rows.push_back({"normalized", std::to_string(*report.normalize_total),
                    std::to_string(report.overall.correct),
                    fmt::format("{:.2f}", 100.0 * normalized)});
  }
  for (const ReportRow &r : report.breakdown) add(r);
  for (const auto &[reason, count] : report.skipped) {
    rows.push_back({"skipped: " + reason, std::to_string(count), "", ""});
  }

  std::array<size_t, 4> width{};
  for (const auto &r : rows) {
    for (size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (const auto &r : rows) {
    std::string line = fmt::format("{:<{}}  {:>{}}  {:>{}}  {:>{}}", r[0], width[0], r[1],
                                   width[1], r[2], width[2], r[3], width[3]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string FormatHeatmapCsv(const SignalMatrix &matrix) {
  std::string out = "layer\\head";
  for (int h = 1; h <= matrix.heads(); ++h) out += fmt::format(",{}", h);
  out += '\n';
  for (int l = 0; l < matrix.layers(); ++l) {
    out += std::to_string(l + 1);
    for (int h = 0; h < matrix.heads(); ++h) {
      const std::optional<double> v = matrix.mean(l, h);
      out += v ? fmt::format(",{:.4f}", *v) : std::string(",");
    }
    out += '\n';
  }
  return out;
}

std::string FormatHeatmapSvg(const SignalMatrix &matrix, std::string_view title) {
  constexpr int kCell = 28;
  constexpr int kLeft = 48;
  constexpr int kTop = 40;
  const int width = kLeft + matrix.heads() * kCell + 16;
  const int height = kTop + matrix.layers() * kCell + 40;

  double max_value = 0.0;
  for (int l = 0; l < matrix.layers(); ++l) {
    for (int h = 0; h < matrix.heads(); ++h) {
      if (auto v = matrix.mean(l, h)) max_value = std::max(max_value, *v);
    }
  }

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height);
  std::string escaped;
  for (char c : title) {
    if (c == '<') escaped += "&lt;";
    else if (c == '>') escaped += "&gt;";
    else if (c == '&') escaped += "&amp;";
    else escaped += c;
  }
  out += fmt::format("<text x=\"{}\" y=\"20\">{}</text>\n", kLeft, escaped);
  for (int l = 0; l < matrix.layers(); ++l) {
    const int y = kTop + l * kCell;
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", kLeft - 6,
                       y + kCell / 2 + 4, l + 1);
    for (int h = 0; h < matrix.heads(); ++h) {
      const int x = kLeft + h * kCell;
      const std::optional<double> v = matrix.mean(l, h);
      std::string fill = "#dddddd";
      if (v) {
        const double t = max_value > 0.0 ? std::clamp(*v / max_value, 0.0, 1.0) : 0.0;
        const int shade = static_cast<int>(255.0 - 200.0 * t + 0.5);
        fill = fmt::format("#{:02x}{:02x}ff", shade, shade);
      }
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\">", x,
                         y, kCell, kCell, fill);
      out += v ? fmt::format("<title>{}:{} {:.4f}</title></rect>\n", l + 1, h + 1, *v)
               : fmt::format("<title>{}:{} absent</title></rect>\n", l + 1, h + 1);
    }
  }
  const int axis_y = kTop + matrix.layers() * kCell + 14;
  for (int h = 0; h < matrix.heads(); ++h) {
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                       kLeft + h * kCell + kCell / 2, axis_y, h + 1);
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">head</text>\n",
                     kLeft + matrix.heads() * kCell / 2, axis_y + 16);
  out += fmt::format(
      "<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" "
      "text-anchor=\"middle\">layer</text>\n",
      kTop + matrix.layers() * kCell / 2, kTop + matrix.layers() * kCell / 2);
  out += "</svg>\n";
  return out;
}

void WriteTextFile(const std::string &path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace bridgeprobe
