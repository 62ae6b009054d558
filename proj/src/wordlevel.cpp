#include "pacl/wordlevel.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "pacl/rng.hpp"

namespace pacl {

namespace {

using ordered_json = nlohmann::ordered_json;

std::map<std::string, std::string> builtin_lexicon() {
  // Closed-class words; everything else falls through to the suffix rules.
  static const std::map<std::string, std::string> lex{
      {"a", "DT"},      {"an", "DT"},    {"the", "DT"},   {"this", "DT"},   {"that", "DT"},
      {"some", "DT"},   {"any", "DT"},   {"to", "TO"},    {"of", "IN"},     {"in", "IN"},
      {"on", "IN"},     {"at", "IN"},    {"for", "IN"},   {"from", "IN"},   {"by", "IN"},
      {"with", "IN"},   {"and", "CC"},   {"or", "CC"},    {"but", "CC"},    {"i", "PRP"},
      {"me", "PRP"},    {"you", "PRP"},  {"it", "PRP"},   {"my", "PRP$"},   {"your", "PRP$"},
      {"is", "VBZ"},    {"are", "VBP"},  {"am", "VBP"},   {"was", "VBD"},   {"be", "VB"},
      {"will", "MD"},   {"would", "MD"}, {"can", "MD"},   {"could", "MD"},  {"do", "VB"},
      {"does", "VBZ"},  {"book", "VB"},  {"play", "VB"},  {"set", "VB"},    {"find", "VB"},
      {"get", "VB"},    {"send", "VB"},  {"check", "VB"}, {"put", "VB"},    {"order", "VB"},
      {"wake", "VB"},   {"text", "VB"},  {"need", "VB"},  {"list", "VB"},   {"show", "VB"},
      {"tell", "VB"},   {"make", "VB"},  {"use", "VB"},   {"what", "WP"},   {"which", "WDT"},
      {"how", "WRB"},   {"when", "WRB"}, {"where", "WRB"},{"then", "RB"},   {"now", "RB"},
      {"also", "RB"},   {"not", "RB"},   {"please", "UH"},{"there", "EX"},  {"one", "CD"},
      {"two", "CD"},    {"three", "CD"}, {"four", "CD"},  {"five", "CD"},   {"six", "CD"},
      {"seven", "CD"},  {"eight", "CD"}, {"nine", "CD"},  {"ten", "CD"},    {"many", "JJ"},
      {"next", "JJ"},   {"right", "RB"}, {"late", "JJ"},  {"free", "JJ"},   {"busy", "JJ"},
      {"rain", "VB"},   {"leaving", "VBG"},
  };
  return lex;
}

bool all_digits(const std::string& w) {
  if (w.empty()) return false;
  return std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

bool ends_with(const std::string& w, const std::string& suffix) {
  return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

LexiconTagger::LexiconTagger() : lexicon_(builtin_lexicon()) {}

LexiconTagger::LexiconTagger(std::map<std::string, std::string> lexicon, bool use_suffix_rules)
    : lexicon_(std::move(lexicon)), use_suffix_rules_(use_suffix_rules) {}

std::string LexiconTagger::tag_word(const std::string& word) const {
  auto it = lexicon_.find(word);
  if (it != lexicon_.end()) return it->second;
  if (!use_suffix_rules_) return "NN";
  if (all_digits(word)) return "CD";
  if (ends_with(word, "ing") && word.size() > 4) return "VBG";
  if (ends_with(word, "ly") && word.size() > 3) return "RB";
  if (ends_with(word, "ful") || ends_with(word, "ous") || ends_with(word, "ive") ||
      ends_with(word, "able"))
    return "JJ";
  if (ends_with(word, "ss")) return "NN";
  if (ends_with(word, "s") && word.size() > 2) return "NNS";
  return "NN";
}

std::vector<PosTaggedWord> pos_filter(const Utterance& utterance,
                                      const std::set<std::string>& keep_tags,
                                      const PosTagger& tagger) {
  const std::vector<std::string> tags = tagger.tag(utterance.tokens);
  if (tags.size() != utterance.tokens.size())
    throw TaggerFailure("tagger returned " + std::to_string(tags.size()) + " tags for " +
                        std::to_string(utterance.tokens.size()) + " tokens");
  std::vector<PosTaggedWord> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (keep_tags.count(tags[i])) {
      out.push_back(PosTaggedWord{utterance.tokens[i], tags[i], utterance.intents});
    }
  }
  return out;
}

std::map<std::string, std::set<std::string>> refine_word_intents(
    const std::map<std::string, std::vector<std::set<std::string>>>& occurrences) {
  std::map<std::string, std::set<std::string>> refined;
  for (const auto& [word, sets] : occurrences) {
    if (sets.empty()) continue;
    std::set<std::string> inter = sets.front();
    std::set<std::string> uni = sets.front();
    for (std::size_t i = 1; i < sets.size(); ++i) {
      std::set<std::string> next;
      std::set_intersection(inter.begin(), inter.end(), sets[i].begin(), sets[i].end(),
                            std::inserter(next, next.begin()));
      inter = std::move(next);
      uni.insert(sets[i].begin(), sets[i].end());
    }
    refined[word] = inter.empty() ? uni : inter;
  }
  return refined;
}

WordLevelDataset build_wordlevel_dataset(const Corpus& corpus,
                                         const std::set<std::string>& keep_tags,
                                         const PosTagger& tagger, std::uint64_t seed) {
  std::map<std::string, std::vector<std::set<std::string>>> occurrences;
  for (const auto& u : corpus.train) {
    for (const auto& w : pos_filter(u, keep_tags, tagger)) {
      occurrences[w.surface].push_back(w.source_intents);
    }
  }

  WordLevelDataset dataset;
  dataset.refined = refine_word_intents(occurrences);

  // Indicator pools: single-intent words per intent, in lexicographic word
  // order (std::map iteration).
  std::map<std::string, std::vector<std::string>> indicators;
  for (const auto& [word, intents] : dataset.refined) {
    if (intents.size() == 1) indicators[*intents.begin()].push_back(word);
  }

  Rng rng(seed, rng_stream::kIndicator);
  for (const auto& [word, intents] : dataset.refined) {
    if (intents.size() == 1) {
      dataset.examples.push_back(WordLevelExample{{word}, intents});
      continue;
    }
    // Multi-intent word: concatenate one indicator word per intent. If any
    // intent lacks an indicator, emit the word unconcatenated and record it.
    std::vector<std::string> picks;
    bool complete = true;
    for (const auto& intent : intents) {
      auto it = indicators.find(intent);
      if (it == indicators.end() || it->second.empty()) {
        complete = false;
        dataset.missing_indicator_count += 1;
        dataset.missing_indicator_intents.push_back(intent);
        continue;
      }
      picks.push_back(it->second[rng.uniform_index(it->second.size())]);
    }
    if (complete) {
      std::vector<std::string> tokens{word};
      tokens.insert(tokens.end(), picks.begin(), picks.end());
      dataset.examples.push_back(WordLevelExample{std::move(tokens), intents});
    } else {
      dataset.examples.push_back(WordLevelExample{{word}, intents});
    }
  }
  return dataset;
}

std::map<std::string, double> pos_intent_report(const Corpus& corpus, const PosTagger& tagger) {
  std::map<std::string, long> counts;
  long total = 0;
  for (const auto& u : corpus.train) {
    const auto tags = tagger.tag(u.tokens);
    if (tags.size() != u.tokens.size())
      throw TaggerFailure("tagger output length mismatch in report");
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (u.slots[i] != "O") {
        counts[tags[i]] += 1;
        total += 1;
      }
    }
  }
  std::map<std::string, double> out;
  if (total == 0) return out;
  for (const auto& [tag, count] : counts) {
    out[tag] = static_cast<double>(count) / static_cast<double>(total);
  }
  return out;
}

std::string write_wordlevel_jsonl(const std::vector<WordLevelExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    ordered_json rec;
    rec["tokens"] = ex.tokens;
    rec["intents"] = std::vector<std::string>(ex.intents.begin(), ex.intents.end());
    out += rec.dump();
    out += "\n";
  }
  return out;
}

std::vector<WordLevelExample> read_wordlevel_jsonl(const std::string& text) {
  std::vector<WordLevelExample> out;
  std::vector<std::string> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    ordered_json rec;
    try {
      rec = ordered_json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("tokens") || !rec.contains("intents"))
      throw MalformedRecord(line_no, "record must have tokens and intents");
    WordLevelExample ex;
    try {
      ex.tokens = rec["tokens"].get<std::vector<std::string>>();
      auto intents = rec["intents"].get<std::vector<std::string>>();
      ex.intents.insert(intents.begin(), intents.end());
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (ex.tokens.empty() || ex.intents.empty())
      throw MalformedRecord(line_no, "tokens and intents must be non-empty");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace pacl
