#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pacl/util.hpp"

namespace pacl {

// One labeled sample: whitespace tokens, BIO slot tags (same length), and a
// non-empty set of intent labels.
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slots;
  std::set<std::string> intents;

  bool operator==(const Utterance&) const = default;
};

struct MalformedBlock : InputError {
  MalformedBlock(int line, const std::string& what)
      : InputError("malformed block at line " + std::to_string(line) + ": " + what),
        line_no(line) {}
  int line_no;
};

struct MalformedRecord : InputError {
  MalformedRecord(int line, const std::string& what)
      : InputError("malformed record at line " + std::to_string(line) + ": " + what),
        line_no(line) {}
  int line_no;
};

struct InvalidFraction : InputError {
  using InputError::InputError;
};

struct InvalidSpec : InputError {
  using InputError::InputError;
};

// Validates the Utterance invariants; throws MalformedBlock with the given
// base line number on violation.
void validate_utterance(const Utterance& u, int line_no = 0);

bool is_valid_bio(const std::vector<std::string>& slots);

// Canonical identity of a multi-intent label set: sorted labels joined by '#'.
std::string label_set_key(const std::set<std::string>& intents);

// Label vocabulary built from the train split: lexicographically ordered,
// duplicate-free. Labels absent from it map to a reserved UNK id equal to
// size() (never predictable by the model).
struct Vocab {
  std::vector<std::string> items;
  std::unordered_map<std::string, int> index;

  static Vocab from_labels(const std::set<std::string>& labels);
  int size() const { return static_cast<int>(items.size()); }
  int unk_id() const { return size(); }
  int id_or_unk(const std::string& label) const {
    auto it = index.find(label);
    return it == index.end() ? unk_id() : it->second;
  }
  bool contains(const std::string& label) const { return index.count(label) != 0; }
  const std::string& name(int id) const { return items.at(static_cast<std::size_t>(id)); }
};

struct Corpus {
  std::vector<Utterance> train;
  std::vector<Utterance> validation;
  std::vector<Utterance> test;
  Vocab intent_vocabulary;  // built from train only
  Vocab slot_vocabulary;    // built from train only

  void rebuild_vocabularies();
  const std::vector<Utterance>& split(const std::string& name) const;
};

// Block text format: one utterance per block, blocks separated by exactly one
// blank line, one "<token> <slot-tag>" line per token, final line
// "#intents=<a>#<b>...".
std::vector<Utterance> parse_block_format(const std::string& text);
std::string write_block_format(const std::vector<Utterance>& utterances);

// JSONL: one object per line, keys "tokens", "slots", "intents" in that
// order; byte-deterministic.
std::string write_jsonl(const std::vector<Utterance>& utterances);
std::vector<Utterance> read_jsonl(const std::string& text);

// Keeps max(1, round-half-up(fraction * stratum_size)) train utterances per
// label-set stratum, chosen by a seeded shuffle; validation/test are kept
// unchanged. Vocabularies are rebuilt from the retained train split.
Corpus stratified_subsample(const Corpus& corpus, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic multi-intent grammar

struct SlotPattern {
  std::string slot_name;
  std::vector<std::vector<std::string>> values;  // each value is 1+ tokens
};

// A template piece is either a literal token (tagged O) or a slot pattern.
struct TemplatePiece {
  std::string literal;                 // used when slot is empty
  std::optional<SlotPattern> slot;
};

struct UtteranceTemplate {
  std::string intent;
  std::vector<TemplatePiece> pieces;
};

struct GrammarSpec {
  std::vector<UtteranceTemplate> templates;
  int train_count = 2000;
  int validation_count = 200;
  int test_count = 200;
  int max_intents = 3;
  // Connector word sequences inserted between single-intent clauses, all
  // tagged O.
  std::vector<std::vector<std::string>> connectors = {{"and"}, {"and", "then"}};
};

// The built-in desk-scale grammar: 8 intents, 12 slot types.
GrammarSpec default_grammar();

Corpus generate_synthetic(const GrammarSpec& spec, std::uint64_t seed);

// Corpus directory convention: train.jsonl / validation.jsonl / test.jsonl.
void save_corpus_dir(const Corpus& corpus, const std::string& dir);
Corpus load_corpus_dir(const std::string& dir);

}  // namespace pacl
