// Conversion of MMAX2-style standoff annotation into corpus records.
//
// Source layout (one set of files per document <doc>):
//   words/<doc>_words.xml                  base tokens
//   markables/<doc>_sentence_level.xml     sentence spans
//   markables/<doc>_entity_level.xml       gold mentions
//   bridging/<doc>_bridging_level.xml      anaphor -> antecedent links
// See docs/standoff-format.md for the per-file schema.

#ifndef BRIDGEPROBE_STANDOFF_H_
#define BRIDGEPROBE_STANDOFF_H_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgeprobe/corpus.h"

namespace bridgeprobe {

// Fatal conversion problem (missing layer, unreadable XML).
class StandoffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConversionResult {
  Corpus corpus;
  // One line per dropped or repaired item: "<doc>\t<item>\t<reason>".
  std::vector<std::string> log;
};

ConversionResult ConvertStandoff(const std::filesystem::path &source_dir);

}  // namespace bridgeprobe

#endif  // BRIDGEPROBE_STANDOFF_H_
