#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace genqa {

struct Fact {
  std::string entity;
  std::string attribute;
  std::string value;
};

struct Candidate {
  std::string text;
  std::optional<bool> gold_label;  // hidden; only in oracle-enabled corpora

  bool operator==(const Candidate&) const = default;
};

struct QAExample {
  std::string id;
  std::string question;
  std::vector<Candidate> candidates;
  std::optional<std::string> gold_value;  // hidden

  bool operator==(const QAExample&) const = default;
};

// Placeholders understood by the templates.
inline constexpr std::string_view kEntitySlot = "{entity}";
inline constexpr std::string_view kAttributeSlot = "{attribute}";
inline constexpr std::string_view kValueSlot = "{value}";

struct CorpusConfig {
  std::size_t n_questions = 100;
  std::size_t n_candidates_per_q = 10;
  double p_correct = 0.3;
  // Per-question correct-fraction jitter: each question draws its own rate
  // uniformly from p_correct +/- p_correct_spread (clamped to (0, 1)).
  double p_correct_spread = 0.0;
  // Context size of the downstream shaper; candidates must number >= k + 1.
  std::size_t k = 5;
  // Answer-sentence patterns. Must contain {value}; may use {entity} and
  // {attribute}. Correct answers and distractors share these.
  std::vector<std::string> templates;
  // Question patterns. Must contain {entity}.
  std::vector<std::string> question_templates;
  // Fraction of distractors that keep the question's entity but state a
  // wrong value; the rest talk about a different entity.
  double p_wrong_value = 0.5;
  bool with_labels = true;
  std::uint64_t seed = 0;
};

std::vector<std::string> default_answer_templates();
std::vector<std::string> default_question_templates();

// Throws ConfigError naming the offending field.
void validate(const CorpusConfig& cfg);

// The closed world behind the generator. Every (entity, attribute) pair has a
// fixed value, so wrong-entity distractors state true facts about other
// entities.
class World {
 public:
  explicit World(std::uint64_t seed);

  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const std::vector<std::string>& values_for(std::size_t attribute) const;
  const std::string& value_of(std::size_t entity, std::size_t attribute) const;
  std::size_t fact_count() const { return entities_.size() * attributes_.size(); }
  Fact fact(std::size_t index) const;

  // Every token the generator can emit with the default templates.
  std::vector<std::string> lexicon() const;

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> attributes_;
  std::vector<std::vector<std::string>> pools_;
  std::vector<std::size_t> fact_value_;  // entity-major index into pools_
};

// Streams generated examples to `sink` in id order. Deterministic in cfg.
void generate_corpus(const CorpusConfig& cfg, const std::function<void(QAExample&&)>& sink);
std::vector<QAExample> generate_corpus(const CorpusConfig& cfg);

// True iff gold_value occurs as a contiguous token run of answer_text.
// Throws Error when the example carries no gold value.
bool oracle_correct(std::string_view answer_text, const QAExample& example);

// --- line-delimited corpus files -------------------------------------------

std::string to_json_line(const QAExample& example);
// Validates one record; `line_no` is 1-based and used in error messages.
QAExample parse_example(std::string_view line, std::size_t line_no);

class CorpusReader {
 public:
  explicit CorpusReader(const std::filesystem::path& path);
  // Returns false at end of file. Throws FormatError on malformed lines and
  // on duplicate ids.
  bool next(QAExample& out);

 private:
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::unordered_set<std::string> seen_;
};

class CorpusWriter {
 public:
  explicit CorpusWriter(const std::filesystem::path& path);
  void write(const QAExample& example);

 private:
  std::ofstream out_;
};

std::vector<QAExample> read_corpus(const std::filesystem::path& path);
void write_corpus(std::span<const QAExample> examples, const std::filesystem::path& path);

}  // namespace genqa
