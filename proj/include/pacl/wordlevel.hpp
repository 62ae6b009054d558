#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pacl/corpus.hpp"

namespace pacl {

struct TaggerFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Penn-style POS tagging seam. The default sequence method maps the
// one-token-in/one-tag-out rule over the utterance; context-sensitive taggers
// can override tag().
class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual std::string tag_word(const std::string& word) const = 0;
  virtual std::vector<std::string> tag(const std::vector<std::string>& tokens) const {
    std::vector<std::string> tags;
    tags.reserve(tokens.size());
    for (const auto& t : tokens) tags.push_back(tag_word(t));
    return tags;
  }
};

// Deterministic lexicon + suffix tagger, so word-level datasets are
// reproducible without external models. Unknown words default to NN.
class LexiconTagger : public PosTagger {
 public:
  LexiconTagger();
  explicit LexiconTagger(std::map<std::string, std::string> lexicon, bool use_suffix_rules = true);
  std::string tag_word(const std::string& word) const override;

 private:
  std::map<std::string, std::string> lexicon_;
  bool use_suffix_rules_ = true;
};

struct PosTaggedWord {
  std::string surface;
  std::string pos;
  std::set<std::string> source_intents;
};

// Word-level sample: a handful of intent-bearing words, no slot annotation.
struct WordLevelExample {
  std::vector<std::string> tokens;
  std::set<std::string> intents;

  bool operator==(const WordLevelExample&) const = default;
};

// Tokens of the utterance whose POS tag is in keep_tags, each carrying the
// utterance's full intent set; order preserved.
std::vector<PosTaggedWord> pos_filter(const Utterance& utterance,
                                      const std::set<std::string>& keep_tags,
                                      const PosTagger& tagger);

// Shared-intent refinement: intersection of all occurrence intent sets when
// non-empty, otherwise their union (the word stays multi-intent and is
// handled by concatenation).
std::map<std::string, std::set<std::string>> refine_word_intents(
    const std::map<std::string, std::vector<std::set<std::string>>>& occurrences);

struct WordLevelDataset {
  std::vector<WordLevelExample> examples;
  std::map<std::string, std::set<std::string>> refined;  // word -> refined intent set
  // (word, intent) pairs that had no single-intent indicator word available;
  // the word was emitted unconcatenated.
  int missing_indicator_count = 0;
  std::vector<std::string> missing_indicator_intents;
};

inline const std::set<std::string>& default_keep_tags() {
  static const std::set<std::string> tags{"NN", "NNS", "JJ"};
  return tags;
}

WordLevelDataset build_wordlevel_dataset(const Corpus& corpus,
                                         const std::set<std::string>& keep_tags,
                                         const PosTagger& tagger, std::uint64_t seed);

// Distribution of POS tags among intent-linked words (slot tag != O) in the
// train split. Proportions over tags with nonzero counts sum to 1.
std::map<std::string, double> pos_intent_report(const Corpus& corpus, const PosTagger& tagger);

// Word-level JSONL: same schema as the corpus with "slots" omitted.
std::string write_wordlevel_jsonl(const std::vector<WordLevelExample>& examples);
std::vector<WordLevelExample> read_wordlevel_jsonl(const std::string& text);

}  // namespace pacl
