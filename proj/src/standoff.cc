#include "bridgeprobe/standoff.h"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

namespace bridgeprobe {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

constexpr std::string_view kWordsSuffix = "_words.xml";

struct WordPos {
  int sentence = -1;
  int token = -1;
};

struct Span {
  int first = 0;  // global word index
  int last = 0;
};

class DocumentConverter {
 public:
  DocumentConverter(const fs::path &root, std::string doc_id,
                    std::vector<std::string> *log)
      : root_(root), log_(log) {
    doc_.id = std::move(doc_id);
  }

  Document Convert() {
    ReadWords();
    ReadSentences();
    ReadMentions();
    ReadLinks();
    doc_.Finalize();
    return std::move(doc_);
  }

 private:
  pt::ptree ReadLayer(const fs::path &path) {
    if (!fs::exists(path)) {
      throw StandoffError(fmt::format("missing layer: {}", path.string()));
    }
    pt::ptree tree;
    try {
      pt::read_xml(path.string(), tree);
    } catch (const pt::xml_parser_error &e) {
      throw StandoffError(fmt::format("unreadable layer {}: {}", path.string(), e.what()));
    }
    return tree;
  }

  void Drop(const std::string &item, const std::string &reason) {
    log_->push_back(fmt::format("{}\t{}\t{}", doc_.id, item, reason));
  }

  // Children named `tag` below the single root element.
  static std::vector<const pt::ptree *> Children(const pt::ptree &tree,
                                                 const std::string &tag) {
    std::vector<const pt::ptree *> out;
    for (const auto &[root_name, root] : tree) {
      if (root_name == "<xmlcomment>") continue;
      for (const auto &[name, child] : root) {
        if (name == tag) out.push_back(&child);
      }
    }
    return out;
  }

  static std::string Attr(const pt::ptree &node, const std::string &name) {
    return node.get<std::string>("<xmlattr>." + name, "");
  }

  void ReadWords() {
    pt::ptree tree = ReadLayer(root_ / "words" / (doc_.id + std::string(kWordsSuffix)));
    for (const pt::ptree *word : Children(tree, "word")) {
      const std::string id = Attr(*word, "id");
      std::string text = word->get_value<std::string>();
      if (id.empty() || text.empty() || word_index_.count(id)) {
        Drop(id.empty() ? "word" : id, "word without id/text or duplicate id");
        continue;
      }
      word_index_[id] = static_cast<int>(words_.size());
      words_.push_back(std::move(text));
    }
    positions_.assign(words_.size(), WordPos{});
  }

  std::optional<int> Word(const std::string &id) const {
    auto it = word_index_.find(id);
    if (it == word_index_.end()) return std::nullopt;
    return it->second;
  }

  // "word_3..word_7" or "word_3". Discontinuous spans are rejected.
  std::optional<Span> ParseSpan(const std::string &span) const {
    if (span.empty() || span.find(',') != std::string::npos) return std::nullopt;
    const size_t dots = span.find("..");
    const std::string a = span.substr(0, dots);
    const std::string b = dots == std::string::npos ? a : span.substr(dots + 2);
    auto first = Word(a);
    auto last = Word(b);
    if (!first || !last || *first > *last) return std::nullopt;
    return Span{*first, *last};
  }

  void ReadSentences() {
    pt::ptree tree =
        ReadLayer(root_ / "markables" / (doc_.id + "_sentence_level.xml"));
    std::vector<Span> spans;
    for (const pt::ptree *markable : Children(tree, "markable")) {
      const std::string id = Attr(*markable, "id");
      auto span = ParseSpan(Attr(*markable, "span"));
      if (!span) {
        Drop(id, "sentence span unresolvable");
        continue;
      }
      spans.push_back(*span);
    }
    std::sort(spans.begin(), spans.end(),
              [](const Span &a, const Span &b) { return a.first < b.first; });
    int covered = -1;
    for (const Span &span : spans) {
      if (span.first <= covered) {
        Drop(fmt::format("sentence@{}", words_[span.first]), "overlapping sentence span");
        continue;
      }
      Sentence sentence;
      for (int w = span.first; w <= span.last; ++w) {
        if (!sentence.text.empty()) sentence.text += ' ';
        Token token;
        token.index = static_cast<int>(sentence.tokens.size());
        token.text = words_[w];
        token.char_start = static_cast<int>(sentence.text.size());
        sentence.text += words_[w];
        token.char_end = static_cast<int>(sentence.text.size());
        positions_[w] = {static_cast<int>(doc_.sentences.size()), token.index};
        sentence.tokens.push_back(std::move(token));
      }
      doc_.sentences.push_back(std::move(sentence));
      covered = span.last;
    }
    for (size_t w = 0; w < words_.size(); ++w) {
      if (positions_[w].sentence < 0) {
        Drop(fmt::format("word#{}", w), "word outside every sentence");
      }
    }
  }

  void ReadMentions() {
    pt::ptree tree = ReadLayer(root_ / "markables" / (doc_.id + "_entity_level.xml"));
    for (const pt::ptree *markable : Children(tree, "markable")) {
      const std::string id = Attr(*markable, "id");
      if (id.empty()) {
        Drop("markable", "markable without id");
        continue;
      }
      auto span = ParseSpan(Attr(*markable, "span"));
      if (!span) {
        Drop(id, "mention span unresolvable or discontinuous");
        continue;
      }
      const WordPos first = positions_[span->first];
      const WordPos last = positions_[span->last];
      if (first.sentence < 0 || first.sentence != last.sentence) {
        Drop(id, "mention crosses a sentence boundary");
        continue;
      }
      if (mention_ids_.count(id)) {
        Drop(id, "duplicate mention id");
        continue;
      }
      Mention mention;
      mention.id = id;
      mention.sentence = first.sentence;
      mention.first = first.token;
      mention.last = last.token;
      const std::string head = Attr(*markable, "head");
      if (!head.empty()) {
        auto w = Word(head);
        if (w && *w >= span->first && *w <= span->last) {
          mention.head = positions_[*w].token;
        } else {
          Drop(id, "head outside mention span; using heuristic head");
        }
      }
      const std::string category = Attr(*markable, "category");
      mention.is_np = category.empty() || category == "np";
      mention_ids_.insert(id);
      doc_.mentions.push_back(std::move(mention));
    }
  }

  void ReadLinks() {
    pt::ptree tree = ReadLayer(root_ / "bridging" / (doc_.id + "_bridging_level.xml"));
    std::map<std::string, size_t> by_anaphor;
    for (const pt::ptree *link : Children(tree, "link")) {
      const std::string anaphor_id = Attr(*link, "anaphor");
      const Mention *anaphor = Find(anaphor_id);
      if (anaphor == nullptr) {
        Drop(anaphor_id.empty() ? "link" : anaphor_id, "unresolvable anaphor pointer");
        continue;
      }
      std::vector<std::string> antecedents;
      std::string list = Attr(*link, "antecedent");
      size_t start = 0;
      while (start <= list.size()) {
        size_t end = list.find(';', start);
        if (end == std::string::npos) end = list.size();
        const std::string ante_id = list.substr(start, end - start);
        start = end + 1;
        if (ante_id.empty()) continue;
        const Mention *ante = Find(ante_id);
        if (ante == nullptr) {
          Drop(fmt::format("{}->{}", anaphor_id, ante_id), "unresolvable antecedent pointer");
        } else if (!StartsBefore(*ante, *anaphor)) {
          Drop(fmt::format("{}->{}", anaphor_id, ante_id), "antecedent does not precede anaphor");
        } else if (std::find(antecedents.begin(), antecedents.end(), ante_id) ==
                   antecedents.end()) {
          antecedents.push_back(ante_id);
        }
      }
      if (antecedents.empty()) {
        Drop(anaphor_id, "bridging link without usable antecedent");
        continue;
      }
      auto it = by_anaphor.find(anaphor_id);
      if (it != by_anaphor.end()) {
        Drop(anaphor_id, "repeated bridging link merged");
        auto &merged = doc_.instances[it->second].antecedents;
        for (const std::string &a : antecedents) {
          if (std::find(merged.begin(), merged.end(), a) == merged.end()) merged.push_back(a);
        }
        continue;
      }
      by_anaphor[anaphor_id] = doc_.instances.size();
      doc_.instances.push_back({anaphor_id, std::move(antecedents)});
    }
  }

  const Mention *Find(const std::string &id) const {
    for (const Mention &m : doc_.mentions) {
      if (m.id == id) return &m;
    }
    return nullptr;
  }

  fs::path root_;
  std::vector<std::string> *log_;
  Document doc_;
  std::vector<std::string> words_;
  std::map<std::string, int> word_index_;
  std::vector<WordPos> positions_;
  std::set<std::string> mention_ids_;
};

}  // namespace

ConversionResult ConvertStandoff(const fs::path &source_dir) {
  for (const char *layer : {"words", "markables", "bridging"}) {
    if (!fs::is_directory(source_dir / layer)) {
      throw StandoffError(fmt::format("missing layer directory: {}",
                                      (source_dir / layer).string()));
    }
  }
  std::vector<std::string> doc_ids;
  for (const auto &entry : fs::directory_iterator(source_dir / "words")) {
    const std::string name = entry.path().filename().string();
    if (name.size() > kWordsSuffix.size() && name.ends_with(kWordsSuffix)) {
      doc_ids.push_back(name.substr(0, name.size() - kWordsSuffix.size()));
    }
  }
  std::sort(doc_ids.begin(), doc_ids.end());

  ConversionResult result;
  for (const std::string &id : doc_ids) {
    DocumentConverter converter(source_dir, id, &result.log);
    result.corpus.documents.push_back(converter.Convert());
  }
  return result;
}

}  // namespace bridgeprobe
