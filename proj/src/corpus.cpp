#include "pacl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "pacl/rng.hpp"

namespace pacl {

namespace {

using ordered_json = nlohmann::ordered_json;

bool is_valid_slot_tag(const std::string& tag) {
  if (tag == "O") return true;
  if (tag.size() < 3) return false;
  if (tag[0] != 'B' && tag[0] != 'I') return false;
  return tag[1] == '-';
}

std::string tag_name(const std::string& tag) { return tag.substr(2); }

}  // namespace

bool is_valid_bio(const std::vector<std::string>& slots) {
  std::string open;  // slot name continued by I- tags, empty when none
  for (const auto& tag : slots) {
    if (!is_valid_slot_tag(tag)) return false;
    if (tag == "O") {
      open.clear();
    } else if (tag[0] == 'B') {
      open = tag_name(tag);
    } else {  // I-
      if (open.empty() || open != tag_name(tag)) return false;
    }
  }
  return true;
}

void validate_utterance(const Utterance& u, int line_no) {
  if (u.tokens.empty()) throw MalformedBlock(line_no, "empty utterance");
  if (u.tokens.size() != u.slots.size())
    throw MalformedBlock(line_no, "token/slot length mismatch");
  for (const auto& tag : u.slots) {
    if (!is_valid_slot_tag(tag)) throw MalformedBlock(line_no, "bad slot tag '" + tag + "'");
  }
  if (!is_valid_bio(u.slots)) throw MalformedBlock(line_no, "I- tag without matching B-");
  if (u.intents.empty()) throw MalformedBlock(line_no, "empty intent set");
  for (const auto& intent : u.intents) {
    if (intent.empty()) throw MalformedBlock(line_no, "empty intent label");
  }
}

std::string label_set_key(const std::set<std::string>& intents) {
  std::vector<std::string> sorted(intents.begin(), intents.end());
  return join(sorted, "#");
}

Vocab Vocab::from_labels(const std::set<std::string>& labels) {
  Vocab v;
  v.items.assign(labels.begin(), labels.end());  // std::set iterates sorted
  for (int i = 0; i < static_cast<int>(v.items.size()); ++i) v.index[v.items[i]] = i;
  return v;
}

void Corpus::rebuild_vocabularies() {
  std::set<std::string> intents;
  std::set<std::string> slots;
  for (const auto& u : train) {
    intents.insert(u.intents.begin(), u.intents.end());
    for (const auto& s : u.slots) slots.insert(s);
  }
  intent_vocabulary = Vocab::from_labels(intents);
  slot_vocabulary = Vocab::from_labels(slots);
}

const std::vector<Utterance>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "validation") return validation;
  if (name == "test") return test;
  throw InputError("unknown split: " + name);
}

std::vector<Utterance> parse_block_format(const std::string& text) {
  std::vector<Utterance> out;
  std::vector<std::string> lines = split(text, '\n');
  // A trailing newline yields one empty final element; drop it.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();

  std::size_t i = 0;
  const std::size_t n = lines.size();
  while (i < n) {
    const int block_start = static_cast<int>(i) + 1;
    if (lines[i].empty()) throw MalformedBlock(block_start, "empty block");

    Utterance u;
    bool have_intents = false;
    while (i < n && !lines[i].empty()) {
      const std::string& line = lines[i];
      const int line_no = static_cast<int>(i) + 1;
      if (line.rfind("#intents=", 0) == 0) {
        if (have_intents) throw MalformedBlock(line_no, "duplicate intent line");
        const std::string payload = line.substr(9);
        for (const auto& intent : split(payload, '#')) {
          if (intent.empty()) throw MalformedBlock(line_no, "empty intent label");
          u.intents.insert(intent);
        }
        have_intents = true;
        ++i;
        // The intent line closes the block.
        if (i < n && !lines[i].empty()) throw MalformedBlock(static_cast<int>(i) + 1, "token line after intent line");
        break;
      }
      if (have_intents) throw MalformedBlock(line_no, "token line after intent line");
      const auto fields = split(line, ' ');
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
        throw MalformedBlock(line_no, "expected '<token> <slot-tag>'");
      u.tokens.push_back(fields[0]);
      u.slots.push_back(fields[1]);
      ++i;
    }
    if (!have_intents) throw MalformedBlock(static_cast<int>(i), "missing intent line");
    validate_utterance(u, block_start);
    out.push_back(std::move(u));

    // Exactly one blank separator line between blocks; a second blank line is
    // caught as an empty block at the top of the loop.
    if (i < n) ++i;
  }
  return out;
}

std::string write_block_format(const std::vector<Utterance>& utterances) {
  std::string out;
  for (std::size_t k = 0; k < utterances.size(); ++k) {
    if (k > 0) out += "\n";
    const Utterance& u = utterances[k];
    for (std::size_t t = 0; t < u.tokens.size(); ++t) {
      out += u.tokens[t] + " " + u.slots[t] + "\n";
    }
    out += "#intents=" + label_set_key(u.intents) + "\n";
  }
  return out;
}

std::string write_jsonl(const std::vector<Utterance>& utterances) {
  std::string out;
  for (const auto& u : utterances) {
    ordered_json rec;
    rec["tokens"] = u.tokens;
    rec["slots"] = u.slots;
    rec["intents"] = std::vector<std::string>(u.intents.begin(), u.intents.end());
    out += rec.dump();
    out += "\n";
  }
  return out;
}

std::vector<Utterance> read_jsonl(const std::string& text) {
  std::vector<Utterance> out;
  std::vector<std::string> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int line_no = static_cast<int>(i) + 1;
    if (lines[i].empty()) throw MalformedRecord(line_no, "blank line");
    ordered_json rec;
    try {
      rec = ordered_json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("tokens") || !rec.contains("slots") ||
        !rec.contains("intents"))
      throw MalformedRecord(line_no, "record must have tokens, slots, intents");
    Utterance u;
    try {
      u.tokens = rec["tokens"].get<std::vector<std::string>>();
      u.slots = rec["slots"].get<std::vector<std::string>>();
      auto intents = rec["intents"].get<std::vector<std::string>>();
      u.intents.insert(intents.begin(), intents.end());
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    try {
      validate_utterance(u, line_no);
    } catch (const MalformedBlock& e) {
      throw MalformedRecord(line_no, e.what());
    }
    out.push_back(std::move(u));
  }
  return out;
}

Corpus stratified_subsample(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw InvalidFraction("fraction must be in (0,1], got " + format_double(fraction));

  // Strata keyed by the full intent set, iterated in sorted key order.
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    strata[label_set_key(corpus.train[i].intents)].push_back(i);
  }

  std::vector<bool> keep(corpus.train.size(), false);
  std::uint64_t stratum_id = 0;
  for (const auto& [key, members] : strata) {
    const std::size_t size = members.size();
    std::size_t retain =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(size) + 0.5));
    retain = std::max<std::size_t>(1, std::min(retain, size));
    Rng rng(Rng::mix(seed) + stratum_id, rng_stream::kSubsample);
    for (std::size_t pick : rng.sample_indices(size, retain)) keep[members[pick]] = true;
    ++stratum_id;
  }

  Corpus out;
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    if (keep[i]) out.train.push_back(corpus.train[i]);
  }
  out.validation = corpus.validation;
  out.test = corpus.test;
  out.rebuild_vocabularies();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic grammar

namespace {

TemplatePiece lit(const std::string& word) { return TemplatePiece{word, std::nullopt}; }

TemplatePiece slot(const std::string& name, std::vector<std::vector<std::string>> values) {
  return TemplatePiece{"", SlotPattern{name, std::move(values)}};
}

std::vector<std::vector<std::string>> words(std::initializer_list<const char*> single) {
  std::vector<std::vector<std::string>> out;
  for (const char* w : single) out.push_back(split(w, ' '));
  return out;
}

// Expands one template into (tokens, slots) with a seeded value choice.
void expand_template(const UtteranceTemplate& tpl, Rng& rng, std::vector<std::string>& tokens,
                     std::vector<std::string>& slots) {
  for (const auto& piece : tpl.pieces) {
    if (!piece.slot) {
      tokens.push_back(piece.literal);
      slots.push_back("O");
      continue;
    }
    const auto& pattern = *piece.slot;
    const auto& value = pattern.values[rng.uniform_index(pattern.values.size())];
    for (std::size_t i = 0; i < value.size(); ++i) {
      tokens.push_back(value[i]);
      slots.push_back((i == 0 ? "B-" : "I-") + pattern.slot_name);
    }
  }
}

std::vector<Utterance> generate_split(const GrammarSpec& spec, int count, Rng& rng) {
  std::vector<Utterance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    int n_intents = 1;
    if (spec.max_intents > 1) {
      // Skewed toward multi-intent, mirroring the mixed-dataset construction.
      const double r = rng.uniform();
      if (spec.max_intents >= 3) {
        n_intents = r < 0.30 ? 1 : (r < 0.75 ? 2 : 3);
      } else {
        n_intents = r < 0.40 ? 1 : 2;
      }
    }
    n_intents = std::min<int>(n_intents, static_cast<int>(spec.templates.size()));

    // Distinct intents per utterance: pick templates with distinct intent labels.
    std::vector<std::size_t> order = rng.sample_indices(spec.templates.size(), spec.templates.size());
    std::vector<const UtteranceTemplate*> chosen;
    std::set<std::string> used;
    for (std::size_t idx : order) {
      const auto& tpl = spec.templates[idx];
      if (used.count(tpl.intent)) continue;
      chosen.push_back(&tpl);
      used.insert(tpl.intent);
      if (static_cast<int>(chosen.size()) == n_intents) break;
    }

    Utterance u;
    for (std::size_t c = 0; c < chosen.size(); ++c) {
      if (c > 0) {
        const auto& conn = spec.connectors[rng.uniform_index(spec.connectors.size())];
        for (const auto& w : conn) {
          u.tokens.push_back(w);
          u.slots.push_back("O");
        }
      }
      expand_template(*chosen[c], rng, u.tokens, u.slots);
      u.intents.insert(chosen[c]->intent);
    }
    validate_utterance(u);
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

GrammarSpec default_grammar() {
  GrammarSpec spec;

  const auto cities = words({"boston", "denver", "austin", "seattle", "miami", "chicago",
                             "portland", "atlanta", "new york", "los angeles", "salt lake city",
                             "nashville", "tucson", "omaha"});
  const auto dates = words({"monday", "tuesday", "wednesday", "thursday", "friday", "saturday",
                            "sunday", "tomorrow", "next week", "june third", "july ninth"});
  const auto artists = words({"coltrane", "nina simone", "brubeck", "mingus", "ella fitzgerald",
                              "monk", "getz", "billie holiday"});
  const auto songs = words({"naima", "blue monk", "take five", "so what", "misty",
                            "moanin", "lush life", "night train", "solitude"});
  const auto times = words({"six", "seven", "noon", "midnight", "eight thirty", "nine fifteen",
                            "five forty", "ten"});
  const auto dishes = words({"noodles", "dumplings", "tacos", "paella", "ramen", "curry",
                             "falafel", "lasagna", "pierogi", "gumbo"});
  const auto cuisines = words({"thai", "mexican", "italian", "indian", "greek", "korean",
                               "ethiopian", "polish"});
  const auto restaurants = words({"lucia", "golden bowl", "papaya house", "the anchor",
                                  "verde", "smokehouse", "mizuki", "olive grove"});
  const auto hotels = words({"grand plaza", "seaview", "alpine lodge", "harbor inn",
                             "the meridian", "cedar court", "lakeside"});
  const auto contacts = words({"maria", "chen", "aunt rosa", "dr patel", "the plumber",
                               "coach lee", "grandma", "oliver"});
  const auto roads = words({"highway nine", "route five", "main street", "the beltway",
                            "interstate forty", "canyon road", "bay bridge"});
  const auto genres = words({"jazz", "blues", "soul", "bossa nova", "swing", "funk"});

  spec.templates = {
      {"book_flight",
       {lit("book"), lit("a"), lit("flight"), lit("to"), slot("city", cities), lit("on"),
        slot("date", dates)}},
      {"book_flight",
       {lit("i"), lit("need"), lit("a"), lit("ticket"), lit("to"), slot("city", cities),
        lit("leaving"), slot("date", dates)}},
      {"get_weather",
       {lit("what"), lit("is"), lit("the"), lit("weather"), lit("in"), slot("city", cities),
        lit("on"), slot("date", dates)}},
      {"get_weather",
       {lit("will"), lit("it"), lit("rain"), lit("in"), slot("city", cities), slot("date", dates)}},
      {"play_music",
       {lit("play"), slot("song", songs), lit("by"), slot("artist", artists)}},
      {"play_music",
       {lit("put"), lit("on"), lit("some"), slot("genre", genres), lit("by"),
        slot("artist", artists)}},
      {"set_alarm",
       {lit("set"), lit("an"), lit("alarm"), lit("for"), slot("time", times)}},
      {"set_alarm",
       {lit("wake"), lit("me"), lit("at"), slot("time", times), lit("on"), slot("date", dates)}},
      {"order_food",
       {lit("order"), lit("some"), slot("dish", dishes), lit("from"),
        slot("restaurant", restaurants)}},
      {"order_food",
       {lit("get"), lit("me"), slot("cuisine", cuisines), lit("food"), lit("from"),
        slot("restaurant", restaurants)}},
      {"find_hotel",
       {lit("find"), lit("a"), lit("room"), lit("at"), slot("hotel", hotels), lit("for"),
        slot("date", dates)}},
      {"find_hotel",
       {lit("is"), lit("the"), slot("hotel", hotels), lit("free"), lit("on"),
        slot("date", dates)}},
      {"send_message",
       {lit("send"), lit("a"), lit("message"), lit("to"), slot("contact", contacts)}},
      {"send_message",
       {lit("text"), slot("contact", contacts), lit("that"), lit("i"), lit("am"), lit("late")}},
      {"check_traffic",
       {lit("check"), lit("traffic"), lit("on"), slot("road", roads)}},
      {"check_traffic",
       {lit("how"), lit("busy"), lit("is"), slot("road", roads), lit("right"), lit("now")}},
  };
  return spec;
}

Corpus generate_synthetic(const GrammarSpec& spec, std::uint64_t seed) {
  if (spec.templates.size() < 2) throw InvalidSpec("grammar needs at least 2 templates");
  for (const auto& tpl : spec.templates) {
    if (tpl.intent.empty()) throw InvalidSpec("template with empty intent");
    if (tpl.pieces.empty()) throw InvalidSpec("template with no pieces");
    for (const auto& piece : tpl.pieces) {
      if (piece.slot && piece.slot->values.empty())
        throw InvalidSpec("slot '" + piece.slot->slot_name + "' has no values");
    }
  }
  if (spec.max_intents < 1) throw InvalidSpec("max_intents must be >= 1");

  Corpus corpus;
  Rng rng(seed, rng_stream::kSynthetic);
  corpus.train = generate_split(spec, spec.train_count, rng);
  corpus.validation = generate_split(spec, spec.validation_count, rng);
  corpus.test = generate_split(spec, spec.test_count, rng);
  corpus.rebuild_vocabularies();
  return corpus;
}

void save_corpus_dir(const Corpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/train.jsonl", write_jsonl(corpus.train));
  write_file(dir + "/validation.jsonl", write_jsonl(corpus.validation));
  write_file(dir + "/test.jsonl", write_jsonl(corpus.test));
}

Corpus load_corpus_dir(const std::string& dir) {
  Corpus corpus;
  corpus.train = read_jsonl(read_file(dir + "/train.jsonl"));
  corpus.validation = read_jsonl(read_file(dir + "/validation.jsonl"));
  corpus.test = read_jsonl(read_file(dir + "/test.jsonl"));
  corpus.rebuild_vocabularies();
  return corpus;
}

}  // namespace pacl
