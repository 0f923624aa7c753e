#include "bridgeprobe/cli.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "bridgeprobe/attention_probe.h"
#include "bridgeprobe/cloze_probe.h"
#include "bridgeprobe/corpus.h"
#include "bridgeprobe/eval.h"
#include "bridgeprobe/prediction.h"
#include "bridgeprobe/standoff.h"
#include "bridgeprobe/transport.h"
#include "json.hpp"

namespace bridgeprobe {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string ResolveBackend(const std::string &flag) {
  if (!flag.empty()) return flag;
  if (const char *env = std::getenv(std::string(kBackendEnv).c_str()); env && *env) {
    return env;
  }
  throw UsageError(fmt::format("no backend: pass --backend or set {}", kBackendEnv));
}

std::string OutputPath(const std::string &dir, const std::string &name) {
  return (fs::path(dir) / name).string();
}

void MakeOutputDir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error(fmt::format("cannot create output directory {}", dir));
  }
}

std::vector<InstanceRef> SortedById(const Corpus &corpus, std::vector<InstanceRef> refs) {
  std::sort(refs.begin(), refs.end(), [&](const InstanceRef &a, const InstanceRef &b) {
    return corpus.InstanceId(a) < corpus.InstanceId(b);
  });
  return refs;
}

// Runs `work` over `refs` on `jobs` workers, each with its own backend
// connection. Results keep the order of `refs`.
template <typename T, typename Work>
std::vector<T> RunPool(const std::string &backend, int jobs,
                       const std::vector<InstanceRef> &refs, Work work,
                       BackendDescriptor &descriptor) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(refs.size())));
  std::vector<std::optional<T>> results(refs.size());
  std::vector<BackendDescriptor> descriptors(jobs);
  std::atomic<size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mutex;
  std::exception_ptr failure;

  auto worker = [&](int w) {
    try {
      BackendClient client(OpenTransport(backend));
      while (!stop) {
        const size_t i = next++;
        if (i >= refs.size()) break;
        results[i] = work(client, refs[i]);
      }
      descriptors[w] = client.descriptor();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex);
      if (!failure) failure = std::current_exception();
      stop = true;
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) threads.emplace_back(worker, w);
    for (std::thread &t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  descriptor = descriptors[0];
  for (const BackendDescriptor &d : descriptors) {
    if (d.layers > 0) {
      descriptor = d;
      break;
    }
  }
  std::vector<T> out;
  out.reserve(results.size());
  for (auto &r : results) out.push_back(std::move(*r));
  return out;
}

ordered_json ManifestBase(std::string_view command) {
  ordered_json m;
  m["tool"] = "bridgeprobe";
  m["version"] = kVersion;
  m["command"] = command;
  return m;
}

void WriteManifest(const std::string &dir, const ordered_json &manifest) {
  WriteTextFile(OutputPath(dir, "manifest.json"), manifest.dump(2) + "\n");
}

void LogExclusion(std::ostream &err, const std::string &instance, const std::string &reason) {
  ordered_json line;
  line["event"] = "excluded";
  line["instance"] = instance;
  line["reason"] = reason;
  err << line.dump() << '\n';
}

std::string FileLabel(const std::string &bucket) {
  return bucket == kExcludedBucket ? std::string("gt10") : bucket;
}

// heatmap_<direction>_<bucket>.csv (and .svg) for every bucket plus "all".
void WriteHeatmaps(const std::string &dir, const std::vector<SignalRecord> &records, int layers,
                   int heads, bool svg, ordered_json &outputs) {
  std::vector<std::optional<std::string>> buckets;
  for (const std::string &label : BucketLabels(BucketScheme::kAttention)) buckets.push_back(label);
  if (std::any_of(records.begin(), records.end(),
                  [](const SignalRecord &r) { return r.bucket == kExcludedBucket; })) {
    buckets.push_back(std::string(kExcludedBucket));
  }
  buckets.push_back(std::nullopt);

  for (Direction direction : {Direction::kAnaphorToAntecedent, Direction::kAntecedentToAnaphor}) {
    for (const auto &bucket : buckets) {
      const SignalMatrix matrix = BuildSignalMatrix(records, layers, heads, direction, bucket);
      const std::string stem = fmt::format("heatmap_{}_{}", Name(direction),
                                           bucket ? FileLabel(*bucket) : "all");
      WriteTextFile(OutputPath(dir, stem + ".csv"), FormatHeatmapCsv(matrix));
      outputs.push_back(stem + ".csv");
      if (svg) {
        const std::string title =
            fmt::format("{} distance {}", Name(direction), bucket ? *bucket : "all");
        WriteTextFile(OutputPath(dir, stem + ".svg"), FormatHeatmapSvg(matrix, title));
        outputs.push_back(stem + ".svg");
      }
    }
  }
}

// Writes report.csv when at least one prediction was scored.
bool WriteReport(const std::string &dir, const std::vector<Prediction> &predictions,
                 std::optional<BreakdownKey> key, ordered_json &outputs, std::ostream &out) {
  const bool any_scored = std::any_of(predictions.begin(), predictions.end(),
                                      [](const Prediction &p) { return !p.skipped; });
  if (!any_scored) return false;
  const EvalReport report = Evaluate(predictions, key);
  WriteTextFile(OutputPath(dir, "report.csv"), FormatReportCsv(report));
  outputs.push_back("report.csv");
  out << FormatReportTable(report);
  return true;
}

ordered_json SkippedSummary(const std::vector<Prediction> &predictions) {
  ordered_json skipped = ordered_json::array();
  for (const Prediction &p : predictions) {
    if (!p.skipped) continue;
    ordered_json entry;
    entry["instance"] = p.anaphor_id;
    entry["reason"] = *p.skipped;
    skipped.push_back(std::move(entry));
  }
  return skipped;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string input;
  std::string out;
};

int RunConvert(const ConvertArgs &args, std::ostream &out) {
  ConversionResult result = ConvertStandoff(args.input);
  MakeOutputDir(args.out);
  SaveCorpus(result.corpus, OutputPath(args.out, "corpus.bpc.json"));
  std::string log;
  for (const std::string &line : result.log) log += line + '\n';
  WriteTextFile(OutputPath(args.out, "conversion_log.tsv"), log);

  ordered_json manifest = ManifestBase("convert");
  manifest["config"]["input"] = args.input;
  manifest["counts"]["documents"] = result.corpus.num_documents();
  manifest["counts"]["mentions"] = result.corpus.num_mentions();
  manifest["counts"]["instances"] = result.corpus.num_instances();
  manifest["counts"]["dropped"] = result.log.size();
  manifest["outputs"] = {"corpus.bpc.json", "conversion_log.tsv"};
  WriteManifest(args.out, manifest);
  out << fmt::format("converted {} documents, {} instances, {} dropped items\n",
                     result.corpus.num_documents(), result.corpus.num_instances(),
                     result.log.size());
  return 0;
}

struct AttentionArgs {
  std::string corpus;
  std::string backend;
  std::string out;
  std::string mode = "pair";
  bool resolve = false;
  std::string heads = "5:1,9:12,11:3,12:2-4";
  std::string candidate_scope = "salient";
  int jobs = 1;
  bool svg = false;
  bool w2_words = false;
  bool w2_exclude_target = false;
};

int RunAttention(const AttentionArgs &args, std::ostream &out, std::ostream &err) {
  const InputMode mode = ParseInputMode(args.mode);
  const HeadSet heads = ParseHeadSet(args.heads);
  const CandidateScope scope = ParseCandidateScope(args.candidate_scope);
  const SignalDefinition definition{args.w2_words, !args.w2_exclude_target};
  const std::string backend = ResolveBackend(args.backend);
  const Corpus corpus = LoadCorpus(args.corpus);
  MakeOutputDir(args.out);

  const std::vector<InstanceRef> refs = SortedById(corpus, corpus.AllInstances());
  BackendDescriptor descriptor;
  const std::vector<InstanceSignals> probed = RunPool<InstanceSignals>(
      backend, args.jobs, refs,
      [&](BackendClient &client, const InstanceRef &ref) {
        return ProbeSignals(client, corpus, ref, mode, definition);
      },
      descriptor);

  std::vector<SignalRecord> records;
  ordered_json excluded = ordered_json::array();
  std::string signals = fmt::format("{}\n", kSignalsHeader);
  for (const InstanceSignals &s : probed) {
    if (s.excluded) {
      LogExclusion(err, s.instance_id, *s.excluded);
      ordered_json entry;
      entry["instance"] = s.instance_id;
      entry["reason"] = *s.excluded;
      excluded.push_back(std::move(entry));
    }
    for (const SignalRecord &r : s.records) {
      signals += SignalCsvRow(r) + '\n';
      records.push_back(r);
    }
  }

  ordered_json outputs = ordered_json::array();
  WriteTextFile(OutputPath(args.out, "signals.csv"), signals);
  outputs.push_back("signals.csv");
  if (descriptor.layers > 0) {
    WriteHeatmaps(args.out, records, descriptor.layers, descriptor.heads, args.svg, outputs);
  }

  std::vector<Prediction> predictions;
  if (args.resolve) {
    predictions = RunPool<Prediction>(
        backend, args.jobs, refs,
        [&](BackendClient &client, const InstanceRef &ref) {
          return ResolveByProminentHeads(client, corpus, ref, scope, heads);
        },
        descriptor);
    WritePredictions(OutputPath(args.out, "predictions.jsonl"), predictions);
    outputs.push_back("predictions.jsonl");
    WriteReport(args.out, predictions, BreakdownKey::kAttentionDistance, outputs, out);
  }

  ordered_json manifest = ManifestBase("attention");
  ordered_json &config = manifest["config"];
  config["corpus"] = args.corpus;
  config["mode"] = Name(mode);
  config["resolve"] = args.resolve;
  if (args.resolve) {
    config["heads"] = FormatHeadSet(heads);
    config["candidate_scope"] = Name(scope);
  }
  config["jobs"] = args.jobs;
  manifest["backend"] = ToJson(descriptor);
  manifest["signal_definition"]["w1_target_pieces"] = "mean";
  manifest["signal_definition"]["w2_denominator"] = definition.count_words ? "words" : "pieces";
  manifest["signal_definition"]["w2_includes_target"] = definition.include_target;
  manifest["signal_definition"]["special_pieces"] = "excluded";
  manifest["counts"]["instances"] = refs.size();
  manifest["counts"]["probed"] = refs.size() - excluded.size();
  manifest["counts"]["excluded"] = excluded.size();
  manifest["counts"]["records"] = records.size();
  manifest["excluded"] = std::move(excluded);
  if (args.resolve) manifest["skipped"] = SkippedSummary(predictions);
  manifest["outputs"] = outputs;
  WriteManifest(args.out, manifest);

  out << fmt::format("{} instances, {} excluded, {} signal records\n", refs.size(),
                     manifest["counts"]["excluded"].get<size_t>(), records.size());
  return 0;
}

struct ClozeArgs {
  std::string corpus;
  std::string backend;
  std::string out;
  std::string context_scope = "more";
  std::string candidate_scope = "salient";
  std::string of = "with";
  bool perturb = false;
  uint64_t seed = kDefaultSeed;
  std::string strategy = "head";
  std::vector<std::string> subset;
  std::string by = "cloze-distance";
  int jobs = 1;
};

int RunCloze(const ClozeArgs &args, std::ostream &out, std::ostream &err) {
  ClozeSettings settings;
  settings.scope = ParseContextScope(args.context_scope);
  settings.candidates = ParseCandidateScope(args.candidate_scope);
  settings.of_variant = ParseOfVariant(args.of);
  settings.perturb = args.perturb;
  settings.seed = args.seed;
  settings.strategy = ParseStrategy(args.strategy);
  if (settings.perturb && settings.of_variant != OfVariant::kWithOf) {
    throw UsageError("--perturb requires --of with");
  }
  const BreakdownKey by = ParseBreakdownKey(args.by);
  std::vector<InstanceFilter> filters;
  for (const std::string &s : args.subset) {
    if (s == "np") filters.push_back(InstanceFilter::NpAntecedents());
    else if (s == "window") filters.push_back(InstanceFilter::InWindow());
    else if (s == "in-context") filters.push_back(InstanceFilter::InContext(settings.scope));
    else throw UsageError(fmt::format("unknown subset '{}' (np|window|in-context)", s));
  }
  const std::string backend = ResolveBackend(args.backend);
  const Corpus corpus = LoadCorpus(args.corpus);
  MakeOutputDir(args.out);

  std::vector<InstanceRef> refs = corpus.AllInstances();
  for (const InstanceFilter &f : filters) refs = FilterInstances(corpus, std::move(refs), f);
  refs = SortedById(corpus, std::move(refs));

  BackendDescriptor descriptor;
  const std::vector<Prediction> predictions = RunPool<Prediction>(
      backend, args.jobs, refs,
      [&](BackendClient &client, const InstanceRef &ref) {
        return PredictCloze(client, corpus, ref, settings);
      },
      descriptor);
  for (const Prediction &p : predictions) {
    if (p.skipped) LogExclusion(err, p.anaphor_id, *p.skipped);
  }

  ordered_json outputs = ordered_json::array();
  WritePredictions(OutputPath(args.out, "predictions.jsonl"), predictions);
  outputs.push_back("predictions.jsonl");
  WriteReport(args.out, predictions, by, outputs, out);

  ordered_json manifest = ManifestBase("cloze");
  ordered_json &config = manifest["config"];
  config["corpus"] = args.corpus;
  config["context_scope"] = Name(settings.scope);
  config["candidate_scope"] = Name(settings.candidates);
  config["of_variant"] = Name(settings.of_variant);
  config["perturb"] = settings.perturb;
  config["perturb_span"] = "whole context";
  config["strategy"] = Name(settings.strategy);
  config["scoring"] = "joint mask slots, mean log-probability";
  config["subset"] = args.subset;
  config["breakdown"] = Name(by);
  config["jobs"] = args.jobs;
  manifest["seed"] = settings.seed;
  manifest["backend"] = ToJson(descriptor);
  const ordered_json skipped = SkippedSummary(predictions);
  manifest["counts"]["instances"] = corpus.num_instances();
  manifest["counts"]["selected"] = refs.size();
  manifest["counts"]["scored"] = refs.size() - skipped.size();
  manifest["counts"]["skipped"] = skipped.size();
  manifest["skipped"] = skipped;
  manifest["outputs"] = outputs;
  WriteManifest(args.out, manifest);
  return 0;
}

struct EvalArgs {
  std::string preds;
  std::string by;
  int normalize_total = 0;
  std::string out;
};

int RunEval(const EvalArgs &args, std::ostream &out) {
  std::optional<BreakdownKey> key;
  if (!args.by.empty()) key = ParseBreakdownKey(args.by);
  std::optional<int> total;
  if (args.normalize_total > 0) total = args.normalize_total;

  const std::vector<Prediction> predictions = LoadPredictions(args.preds);
  const EvalReport report = Evaluate(predictions, key, total);
  out << FormatReportTable(report);
  if (!args.out.empty()) {
    MakeOutputDir(args.out);
    WriteTextFile(OutputPath(args.out, "report.csv"), FormatReportCsv(report));
    ordered_json manifest = ManifestBase("eval");
    manifest["config"]["preds"] = args.preds;
    manifest["config"]["breakdown"] = key ? Name(*key) : "none";
    if (total) manifest["config"]["normalize_total"] = *total;
    manifest["counts"]["predictions"] = predictions.size();
    manifest["counts"]["scored"] = report.overall.n;
    manifest["counts"]["skipped"] = report.num_skipped();
    manifest["outputs"] = {"report.csv"};
    WriteManifest(args.out, manifest);
  }
  return 0;
}

struct ReportArgs {
  std::string preds;
  std::string signals;
  std::string out;
  std::string by = "cloze-distance";
  bool svg = false;
};

int RunReport(const ReportArgs &args, std::ostream &out) {
  if (args.preds.empty() && args.signals.empty()) {
    throw UsageError("report needs --preds and/or --signals");
  }
  const BreakdownKey key = ParseBreakdownKey(args.by);
  std::vector<Prediction> predictions;
  std::vector<SignalRecord> records;
  if (!args.preds.empty()) predictions = LoadPredictions(args.preds);
  if (!args.signals.empty()) records = LoadSignals(args.signals);
  MakeOutputDir(args.out);

  ordered_json outputs = ordered_json::array();
  ordered_json manifest = ManifestBase("report");
  if (!args.preds.empty()) {
    const EvalReport report = Evaluate(predictions, key);
    WriteTextFile(OutputPath(args.out, "report.csv"), FormatReportCsv(report));
    WriteTextFile(OutputPath(args.out, "report.txt"), FormatReportTable(report));
    outputs.push_back("report.csv");
    outputs.push_back("report.txt");
    out << FormatReportTable(report);
    manifest["config"]["preds"] = args.preds;
    manifest["config"]["breakdown"] = Name(key);
  }
  if (!args.signals.empty()) {
    int layers = 0;
    int heads = 0;
    for (const SignalRecord &r : records) {
      layers = std::max(layers, r.layer);
      heads = std::max(heads, r.head);
    }
    if (layers > 0) WriteHeatmaps(args.out, records, layers, heads, args.svg, outputs);
    manifest["config"]["signals"] = args.signals;
    manifest["shape"]["layers"] = layers;
    manifest["shape"]["heads"] = heads;
  }
  manifest["outputs"] = outputs;
  WriteManifest(args.out, manifest);
  return 0;
}

int Fail(std::ostream &err, std::string_view code, const std::string &message, int status) {
  ordered_json line;
  line["error"]["code"] = code;
  line["error"]["message"] = message;
  err << line.dump() << '\n';
  return status;
}

}  // namespace

int Run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Probe masked language models for bridging anaphora.", "bridgeprobe"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  ConvertArgs convert;
  CLI::App *convert_cmd = app.add_subcommand("convert", "Convert a standoff corpus to JSONL");
  convert_cmd->add_option("--input", convert.input, "Standoff corpus directory")->required();
  convert_cmd->add_option("--out", convert.out, "Output directory")->required();

  AttentionArgs attention;
  CLI::App *attention_cmd =
      app.add_subcommand("attention", "Compute attention signals per layer and head");
  attention_cmd->add_option("--corpus", attention.corpus, "Corpus file")->required();
  attention_cmd->add_option("--backend", attention.backend, "cmd:<command> or http:<url>");
  attention_cmd->add_option("--out", attention.out, "Output directory")->required();
  attention_cmd->add_option("--mode", attention.mode, "pair or full")->capture_default_str();
  attention_cmd->add_flag("--resolve", attention.resolve,
                          "Also pick antecedents with the prominent heads");
  attention_cmd->add_option("--heads", attention.heads, "Head list, e.g. 5:1,12:2-4")
      ->capture_default_str();
  attention_cmd->add_option("--candidate-scope", attention.candidate_scope, "salient or all")
      ->capture_default_str();
  attention_cmd->add_option("--jobs", attention.jobs, "Parallel backend connections")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  attention_cmd->add_flag("--svg", attention.svg, "Also render heatmaps as SVG");
  attention_cmd->add_flag("--w2-words", attention.w2_words,
                          "Normalize w2 by word count instead of piece count");
  attention_cmd->add_flag("--w2-exclude-target", attention.w2_exclude_target,
                          "Leave the target's pieces out of w2");

  ClozeArgs cloze;
  CLI::App *cloze_cmd = app.add_subcommand("cloze", "Resolve anaphors with of-cloze queries");
  cloze_cmd->add_option("--corpus", cloze.corpus, "Corpus file")->required();
  cloze_cmd->add_option("--backend", cloze.backend, "cmd:<command> or http:<url>");
  cloze_cmd->add_option("--out", cloze.out, "Output directory")->required();
  cloze_cmd->add_option("--context-scope", cloze.context_scope,
                        "anaphor, sentence, ante-ana or more")
      ->capture_default_str();
  cloze_cmd->add_option("--candidate-scope", cloze.candidate_scope, "salient or all")
      ->capture_default_str();
  cloze_cmd->add_option("--of", cloze.of, "with or without")->capture_default_str();
  cloze_cmd->add_flag("--perturb", cloze.perturb, "Shuffle unprotected context words");
  cloze_cmd->add_option("--seed", cloze.seed, "Perturbation seed")->capture_default_str();
  cloze_cmd->add_option("--strategy", cloze.strategy, "head, phrase or first-piece")
      ->capture_default_str();
  cloze_cmd->add_option("--subset", cloze.subset, "np, window or in-context (repeatable)");
  cloze_cmd->add_option("--by", cloze.by, "Report breakdown key")->capture_default_str();
  cloze_cmd->add_option("--jobs", cloze.jobs, "Parallel backend connections")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  EvalArgs eval;
  CLI::App *eval_cmd = app.add_subcommand("eval", "Score a predictions file");
  eval_cmd->add_option("--preds", eval.preds, "predictions.jsonl")->required();
  eval_cmd->add_option("--by", eval.by,
                       "cloze-distance, attention-distance, context-scope, "
                       "candidate-scope or model");
  eval_cmd->add_option("--normalize-total", eval.normalize_total,
                       "Also report accuracy over this many instances")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval.out, "Write report.csv here");

  ReportArgs report;
  CLI::App *report_cmd = app.add_subcommand("report", "Render reports and heatmaps");
  report_cmd->add_option("--preds", report.preds, "predictions.jsonl");
  report_cmd->add_option("--signals", report.signals, "signals.csv");
  report_cmd->add_option("--out", report.out, "Output directory")->required();
  report_cmd->add_option("--by", report.by, "Report breakdown key")->capture_default_str();
  report_cmd->add_flag("--svg", report.svg, "Also render heatmaps as SVG");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success &e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError &e) {
    return Fail(err, "usage", e.what(), 2);
  }

  try {
    if (convert_cmd->parsed()) return RunConvert(convert, out);
    if (attention_cmd->parsed()) return RunAttention(attention, out, err);
    if (cloze_cmd->parsed()) return RunCloze(cloze, out, err);
    if (eval_cmd->parsed()) return RunEval(eval, out);
    return RunReport(report, out);
  } catch (const UsageError &e) {
    return Fail(err, "usage", e.what(), 2);
  } catch (const BackendError &e) {
    return Fail(err, "backend", fmt::format("{}: {}", Name(e.code()), e.what()), 3);
  } catch (const std::invalid_argument &e) {
    return Fail(err, "usage", e.what(), 2);
  } catch (const std::exception &e) {
    const std::string message = e.what();
    if (message.starts_with("file not found")) return Fail(err, "file_not_found", message, 1);
    if (dynamic_cast<const CorpusError *>(&e)) return Fail(err, "corpus", message, 1);
    if (dynamic_cast<const StandoffError *>(&e)) return Fail(err, "corpus", message, 1);
    return Fail(err, "error", message, 1);
  }
}

}  // namespace bridgeprobe
