#include "genqa/corpus.h"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "genqa/error.h"
#include "genqa/random.h"
#include "genqa/text.h"

namespace genqa {
namespace {

const std::vector<std::string> kEntityHeads = {
    "north", "south", "east", "west", "upper", "lower", "greater", "little", "port", "fort",
    "lake", "saint", "glen", "red", "blue", "green", "gray", "high", "far", "old"};
const std::vector<std::string> kEntityTails = {
    "varen",  "kelmar", "dostra", "ilvane", "morrow", "quenta", "belhar", "tisk",  "orvale", "zandor",
    "pellin", "corvath", "nimue", "straven", "ulgard", "yorrik", "feloria", "haddon", "sarnia", "wexley"};

struct AttributeSpec {
  std::string phrase;
  std::vector<std::string> values;
};

std::vector<std::string> numbers(int lo, int hi, int step, const std::string& suffix = "") {
  std::vector<std::string> out;
  for (int n = lo; n <= hi; n += step) out.push_back(std::to_string(n) + suffix);
  return out;
}

std::vector<std::string> pairs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out;
  for (const auto& x : a)
    for (const auto& y : b) out.push_back(x + " " + y);
  return out;
}

std::vector<AttributeSpec> attribute_specs() {
  return {
      {"capital",
       {"paris", "lyon", "berlin", "madrid", "rome", "oslo", "lima", "cairo", "delhi", "tokyo",
        "quito", "sofia", "riga", "minsk", "dakar", "accra", "hanoi", "manila", "bogota", "caracas",
        "havana", "lisbon", "vienna", "prague"}},
      {"population", numbers(2, 48, 2, " million")},
      {"number of provinces", numbers(3, 42, 1)},
      {"founding year", numbers(1700, 1990, 10)},
      {"official language",
       {"arvic", "belanese", "corish", "delvan", "eskari", "fennic", "gorlan", "hestic", "iberan",
        "jorvic", "kaldic", "lumish", "morvan", "nesari", "ostric", "pelvan", "quorin", "rustan"}},
      {"currency", pairs({"silver", "gold", "iron", "copper", "bronze"}, {"crown", "mark", "pound", "shell"})},
      {"head of state",
       pairs({"anna", "boris", "clara", "dmitri", "elena"}, {"berg", "castell", "dunmore", "everly"})},
      {"highest mountain",
       {"kora", "tashi", "melun", "ardent", "vesk", "holm", "brana", "culmen", "dravik", "eiger",
        "fjell", "gorra", "hyrna", "istok", "jalon", "kesta"}},
  };
}

std::string fill(const std::string& pattern, const Fact& f) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    auto slot = [&](std::string_view name, const std::string& v) {
      if (pattern.compare(i, name.size(), name) == 0) {
        out += v;
        i += name.size();
        return true;
      }
      return false;
    };
    if (slot(kEntitySlot, f.entity) || slot(kAttributeSlot, f.attribute) ||
        slot(kValueSlot, f.value))
      continue;
    out.push_back(pattern[i++]);
  }
  return join_tokens(split_tokens(out));
}

bool has_slot(const std::string& p, std::string_view slot) {
  return p.find(slot) != std::string::npos;
}

}  // namespace

std::vector<std::string> default_answer_templates() {
  return {
      "the {attribute} of {entity} is {value}",
      "{value} is the {attribute} of {entity}",
      "{entity} has {value} as its {attribute}",
      "records show that the {attribute} of {entity} is {value}",
      "for {entity} the {attribute} is {value}",
  };
}

std::vector<std::string> default_question_templates() {
  return {
      "what is the {attribute} of {entity}",
      "tell me the {attribute} of {entity}",
      "do you know the {attribute} of {entity}",
  };
}

void validate(const CorpusConfig& cfg) {
  if (cfg.n_questions == 0) throw ConfigError("n_questions", "must be positive");
  if (cfg.n_candidates_per_q == 0) throw ConfigError("n_candidates_per_q", "must be positive");
  if (!(cfg.p_correct > 0.0 && cfg.p_correct < 1.0))
    throw ConfigError("p_correct", "must lie strictly between 0 and 1");
  if (!(cfg.p_correct_spread >= 0.0 && cfg.p_correct_spread < 1.0))
    throw ConfigError("p_correct_spread", "must lie in [0, 1)");
  if (!(cfg.p_wrong_value >= 0.0 && cfg.p_wrong_value <= 1.0))
    throw ConfigError("p_wrong_value", "must lie in [0, 1]");
  if (cfg.k == 0) throw ConfigError("k", "must be positive");
  if (cfg.n_candidates_per_q < cfg.k + 1)
    throw ConfigError("n_candidates_per_q", "must be at least k + 1 = " + std::to_string(cfg.k + 1));
  for (const auto& t : cfg.templates) {
    if (!has_slot(t, kValueSlot) && !has_slot(t, kEntitySlot) && !has_slot(t, kAttributeSlot))
      throw ConfigError("templates", "template has no placeholder: \"" + t + "\"");
    if (!has_slot(t, kValueSlot))
      throw ConfigError("templates", "answer template lacks {value}: \"" + t + "\"");
  }
  for (const auto& t : cfg.question_templates) {
    if (!has_slot(t, kEntitySlot) && !has_slot(t, kAttributeSlot) && !has_slot(t, kValueSlot))
      throw ConfigError("question_templates", "template has no placeholder: \"" + t + "\"");
    if (!has_slot(t, kEntitySlot))
      throw ConfigError("question_templates", "question template lacks {entity}: \"" + t + "\"");
  }
}

World::World(std::uint64_t seed) {
  for (const auto& head : kEntityHeads)
    for (const auto& tail : kEntityTails) entities_.push_back(head + " " + tail);
  for (auto& spec : attribute_specs()) {
    attributes_.push_back(spec.phrase);
    pools_.push_back(std::move(spec.values));
  }
  fact_value_.resize(fact_count());
  for (std::size_t e = 0; e < entities_.size(); ++e)
    for (std::size_t a = 0; a < attributes_.size(); ++a)
      fact_value_[e * attributes_.size() + a] =
          hash_parts(seed, {"fact", entities_[e], attributes_[a]}) % pools_[a].size();
}

const std::vector<std::string>& World::values_for(std::size_t attribute) const {
  return pools_.at(attribute);
}

const std::string& World::value_of(std::size_t entity, std::size_t attribute) const {
  return pools_[attribute][fact_value_.at(entity * attributes_.size() + attribute)];
}

Fact World::fact(std::size_t index) const {
  std::size_t e = index / attributes_.size();
  std::size_t a = index % attributes_.size();
  return {entities_.at(e), attributes_[a], value_of(e, a)};
}

std::vector<std::string> World::lexicon() const {
  std::set<std::string> words;
  auto add = [&words](const std::string& text) {
    for (auto& t : split_tokens(text)) words.insert(std::move(t));
  };
  for (const auto& e : entities_) add(e);
  for (const auto& a : attributes_) add(a);
  for (const auto& pool : pools_)
    for (const auto& v : pool) add(v);
  for (const auto& t : default_answer_templates()) add(fill(t, Fact{}));
  for (const auto& t : default_question_templates()) add(fill(t, Fact{}));
  return {words.begin(), words.end()};
}

void generate_corpus(const CorpusConfig& cfg_in, const std::function<void(QAExample&&)>& sink) {
  CorpusConfig cfg = cfg_in;
  if (cfg.templates.empty()) cfg.templates = default_answer_templates();
  if (cfg.question_templates.empty()) cfg.question_templates = default_question_templates();
  validate(cfg);

  const World world(cfg.seed);
  if (cfg.n_questions > world.fact_count())
    throw ConfigError("n_questions",
                      "exceeds the number of distinct facts (" + std::to_string(world.fact_count()) + ")");

  Rng rng(cfg.seed);
  std::vector<std::size_t> facts(world.fact_count());
  for (std::size_t i = 0; i < facts.size(); ++i) facts[i] = i;
  rng.shuffle(facts);

  const std::size_t n_attr = world.attributes().size();
  const std::size_t n_ent = world.entities().size();
  const int id_width = std::max<int>(6, static_cast<int>(std::to_string(cfg.n_questions).size()));

  for (std::size_t qi = 0; qi < cfg.n_questions; ++qi) {
    const std::size_t fact_index = facts[qi];
    const std::size_t ent = fact_index / n_attr;
    const std::size_t attr = fact_index % n_attr;
    const Fact gold = world.fact(fact_index);
    const auto gold_tokens = split_tokens(gold.value);

    double p_q = cfg.p_correct;
    if (cfg.p_correct_spread > 0.0)
      p_q = std::clamp(rng.uniform(cfg.p_correct - cfg.p_correct_spread,
                                   cfg.p_correct + cfg.p_correct_spread),
                       0.01, 0.99);

    std::vector<bool> correct(cfg.n_candidates_per_q);
    bool any = false;
    for (std::size_t c = 0; c < correct.size(); ++c) {
      correct[c] = rng.uniform() < p_q;
      any = any || correct[c];
    }
    if (!any) correct[rng.below(correct.size())] = true;

    QAExample ex;
    std::string id = std::to_string(qi);
    ex.id = "q" + std::string(static_cast<std::size_t>(id_width) - id.size(), '0') + id;
    ex.question = fill(rng.pick(cfg.question_templates), gold);
    for (std::size_t c = 0; c < correct.size(); ++c) {
      Fact stated = gold;
      if (!correct[c]) {
        const auto& pool = world.values_for(attr);
        if (rng.uniform() < cfg.p_wrong_value) {
          do {
            stated.value = rng.pick(pool);
          } while (stated.value == gold.value);
        } else {
          std::size_t other;
          do {
            other = rng.below(n_ent);
          } while (other == ent);
          stated.entity = world.entities()[other];
          stated.value = world.value_of(other, attr);
          while (stated.value == gold.value) stated.value = rng.pick(pool);
        }
      }
      Candidate cand{fill(rng.pick(cfg.templates), stated), std::nullopt};
      const bool contains = contains_token_run(split_tokens(cand.text), gold_tokens);
      if (contains != correct[c])
        throw Error("corpus generator produced an inconsistent label for " + ex.id +
                    "; templates must not contain value tokens");
      if (cfg.with_labels) cand.gold_label = correct[c];
      ex.candidates.push_back(std::move(cand));
    }
    if (cfg.with_labels) ex.gold_value = gold.value;
    sink(std::move(ex));
  }
}

std::vector<QAExample> generate_corpus(const CorpusConfig& cfg) {
  std::vector<QAExample> out;
  out.reserve(cfg.n_questions);
  generate_corpus(cfg, [&out](QAExample&& e) { out.push_back(std::move(e)); });
  return out;
}

bool oracle_correct(std::string_view answer_text, const QAExample& example) {
  if (!example.gold_value)
    throw Error("oracle_correct: example " + example.id + " carries no gold_value");
  return contains_token_run(split_tokens(answer_text), split_tokens(*example.gold_value));
}

// --- serialization ----------------------------------------------------------

std::string to_json_line(const QAExample& example) {
  nlohmann::ordered_json j;
  j["id"] = example.id;
  j["question"] = example.question;
  auto cands = nlohmann::ordered_json::array();
  for (const auto& c : example.candidates) {
    nlohmann::ordered_json cj;
    cj["text"] = c.text;
    if (c.gold_label) cj["gold_label"] = *c.gold_label;
    cands.push_back(std::move(cj));
  }
  j["candidates"] = std::move(cands);
  if (example.gold_value) j["gold_value"] = *example.gold_value;
  return j.dump();
}

QAExample parse_example(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(line_no, "<record>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError(line_no, "<record>", "expected a JSON object");

  static const std::set<std::string> kKnown = {"id", "question", "candidates", "gold_value"};
  for (const auto& [key, _] : j.items())
    if (!kKnown.count(key)) throw FormatError(line_no, key, "unknown field");

  auto require_string = [&](const nlohmann::json& obj, const char* field) -> std::string {
    auto it = obj.find(field);
    if (it == obj.end()) throw FormatError(line_no, field, "missing");
    if (!it->is_string()) throw FormatError(line_no, field, "expected a string");
    return it->get<std::string>();
  };

  QAExample ex;
  ex.id = require_string(j, "id");
  ex.question = require_string(j, "question");
  auto cit = j.find("candidates");
  if (cit == j.end()) throw FormatError(line_no, "candidates", "missing");
  if (!cit->is_array()) throw FormatError(line_no, "candidates", "expected an array");
  for (const auto& cj : *cit) {
    if (!cj.is_object()) throw FormatError(line_no, "candidates", "expected objects");
    for (const auto& [key, _] : cj.items())
      if (key != "text" && key != "gold_label")
        throw FormatError(line_no, "candidates." + key, "unknown field");
    Candidate c;
    auto t = cj.find("text");
    if (t == cj.end() || !t->is_string())
      throw FormatError(line_no, "candidates.text", "missing or not a string");
    c.text = t->get<std::string>();
    if (split_tokens(c.text).empty()) throw FormatError(line_no, "candidates.text", "empty");
    if (auto g = cj.find("gold_label"); g != cj.end()) {
      if (!g->is_boolean()) throw FormatError(line_no, "candidates.gold_label", "expected a boolean");
      c.gold_label = g->get<bool>();
    }
    ex.candidates.push_back(std::move(c));
  }
  if (j.contains("gold_value")) ex.gold_value = require_string(j, "gold_value");
  return ex;
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : in_(path) {
  if (!in_) throw Error("cannot open corpus file " + path.string());
}

bool CorpusReader::next(QAExample& out) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (split_tokens(line).empty()) continue;
    out = parse_example(line, line_no_);
    if (!seen_.insert(out.id).second) throw FormatError(line_no_, "id", "duplicate id " + out.id);
    return true;
  }
  return false;
}

CorpusWriter::CorpusWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
}

void CorpusWriter::write(const QAExample& example) {
  out_ << to_json_line(example) << '\n';
  if (!out_) throw Error("write failure");
}

std::vector<QAExample> read_corpus(const std::filesystem::path& path) {
  CorpusReader reader(path);
  std::vector<QAExample> out;
  QAExample ex;
  while (reader.next(ex)) out.push_back(std::move(ex));
  return out;
}

void write_corpus(std::span<const QAExample> examples, const std::filesystem::path& path) {
  CorpusWriter w(path);
  for (const auto& e : examples) w.write(e);
}

}  // namespace genqa
