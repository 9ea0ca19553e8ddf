#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "genqa/corpus.h"
#include "genqa/error.h"
#include "genqa/text.h"

using namespace genqa;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "genqa_unit";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("generate_corpus is deterministic for a fixed seed") {
  CorpusConfig cfg;
  cfg.seed = 7;
  cfg.n_questions = 100;
  const auto a = temp_file("det_a.jsonl");
  const auto b = temp_file("det_b.jsonl");
  write_corpus(generate_corpus(cfg), a);
  write_corpus(generate_corpus(cfg), b);
  CHECK(slurp(a) == slurp(b));
  cfg.seed = 8;
  CHECK(generate_corpus(cfg) != read_corpus(a));
}

TEST_CASE("mean correct count tracks p_correct") {
  CorpusConfig cfg;
  cfg.p_correct = 0.5;
  cfg.n_candidates_per_q = 10;
  cfg.n_questions = 1000;
  cfg.seed = 3;
  const auto corpus = generate_corpus(cfg);
  double total = 0;
  for (const auto& e : corpus)
    for (const auto& c : e.candidates) total += c.gold_label.value() ? 1 : 0;
  const double mean = total / static_cast<double>(corpus.size());
  CHECK(mean >= 4.0);
  CHECK(mean <= 6.0);
}

TEST_CASE("labels agree with the oracle for every candidate") {
  CorpusConfig cfg;
  cfg.n_questions = 300;
  cfg.seed = 11;
  cfg.p_correct_spread = 0.2;
  for (const auto& e : generate_corpus(cfg)) {
    REQUIRE(e.gold_value.has_value());
    CHECK(e.candidates.size() >= cfg.k + 1);
    bool any = false;
    for (const auto& c : e.candidates) {
      CHECK(oracle_correct(c.text, e) == c.gold_label.value());
      any = any || c.gold_label.value();
      const auto toks = split_tokens(c.text);
      CHECK_FALSE(toks.empty());
      for (const auto& t : toks) CHECK(t.front() != '[');
    }
    CHECK(any);
  }
}

TEST_CASE("facts are unique per corpus and values have 1-3 tokens") {
  CorpusConfig cfg;
  cfg.n_questions = 500;
  cfg.seed = 2;
  std::set<std::string> questions;
  for (const auto& e : generate_corpus(cfg)) {
    CHECK(questions.insert(e.question).second);
    const auto n = split_tokens(*e.gold_value).size();
    CHECK(n >= 1);
    CHECK(n <= 3);
  }
}

TEST_CASE("correct candidates contain a numeric gold value as a token") {
  CorpusConfig cfg;
  cfg.n_questions = 400;
  cfg.seed = 5;
  bool saw_number = false;
  for (const auto& e : generate_corpus(cfg)) {
    const auto gold = split_tokens(*e.gold_value);
    if (gold.size() != 1 || gold[0].find_first_not_of("0123456789") != std::string::npos) continue;
    saw_number = true;
    for (const auto& c : e.candidates)
      if (c.gold_label.value()) CHECK(contains_token_run(split_tokens(c.text), gold));
  }
  CHECK(saw_number);
}

TEST_CASE("oracle_correct uses token containment") {
  QAExample e{"q", "what is the capital of fr", {}, std::string("paris")};
  CHECK(oracle_correct("the capital of fr is paris", e));
  CHECK_FALSE(oracle_correct("the capital of fr is lyon", e));
  CHECK_FALSE(oracle_correct("parisian weather is mild", e));
  QAExample unlabeled{"q", "what", {}, std::nullopt};
  CHECK_THROWS_AS(oracle_correct("x", unlabeled), Error);
}

TEST_CASE("config validation names the offending field") {
  auto field_of = [](const CorpusConfig& c) {
    try {
      validate(c);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string();
  };
  CorpusConfig c;
  c.p_correct = 1.5;
  CHECK(field_of(c) == "p_correct");
  c = CorpusConfig{};
  c.p_correct = 0.0;
  CHECK(field_of(c) == "p_correct");
  c = CorpusConfig{};
  c.n_candidates_per_q = 5;  // k = 5 needs 6
  CHECK(field_of(c) == "n_candidates_per_q");
  c = CorpusConfig{};
  c.n_questions = 0;
  CHECK(field_of(c) == "n_questions");
  c = CorpusConfig{};
  c.templates = {"a sentence without slots"};
  CHECK(field_of(c) == "templates");
  c = CorpusConfig{};
  c.question_templates = {"what is it"};
  CHECK(field_of(c) == "question_templates");
  CHECK(field_of(CorpusConfig{}).empty());
}

TEST_CASE("corpus files round trip") {
  CorpusConfig cfg;
  cfg.n_questions = 2;
  cfg.seed = 1;
  const auto examples = generate_corpus(cfg);
  const auto path = temp_file("rt.jsonl");
  write_corpus(examples, path);
  CHECK(read_corpus(path) == examples);

  cfg.with_labels = false;
  const auto unlabeled = generate_corpus(cfg);
  write_corpus(unlabeled, path);
  const auto back = read_corpus(path);
  CHECK(back == unlabeled);
  CHECK_FALSE(back[0].gold_value.has_value());
  CHECK_FALSE(back[0].candidates[0].gold_label.has_value());
}

TEST_CASE("empty corpus file reads as an empty stream") {
  const auto path = temp_file("empty.jsonl");
  std::ofstream(path).close();
  CHECK(read_corpus(path).empty());
}

TEST_CASE("malformed records report line and field") {
  const auto path = temp_file("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"a","question":"q one","candidates":[{"text":"x"}]})" << "\n";
    out << R"({"id":"b","candidates":[{"text":"x"}]})" << "\n";
  }
  try {
    read_corpus(path);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "question");
  }
}

TEST_CASE("unknown fields and duplicate ids are rejected") {
  CHECK_THROWS_AS(parse_example(R"({"id":"a","question":"q","candidates":[{"text":"x"}],"extra":1})", 1),
                  FormatError);
  CHECK_THROWS_AS(parse_example(R"({"id":"a","question":"q","candidates":[{"text":"x","score":1}]})", 1),
                  FormatError);
  CHECK_THROWS_AS(parse_example(R"({"id":"a","question":"q","candidates":[{"text":""}]})", 1), FormatError);
  CHECK_THROWS_AS(parse_example("not json", 3), FormatError);
  const auto path = temp_file("dup.jsonl");
  {
    std::ofstream out(path);
    out << R"({"id":"a","question":"q one","candidates":[{"text":"x"}]})" << "\n";
    out << R"({"id":"a","question":"q two","candidates":[{"text":"y"}]})" << "\n";
  }
  CHECK_THROWS_AS(read_corpus(path), FormatError);
}

TEST_CASE("field order in records is not significant") {
  const auto a = parse_example(R"({"question":"q","id":"a","candidates":[{"gold_label":true,"text":"x"}],"gold_value":"x"})", 1);
  const auto b = parse_example(R"({"id":"a","question":"q","candidates":[{"text":"x","gold_label":true}],"gold_value":"x"})", 1);
  CHECK(a == b);
}
