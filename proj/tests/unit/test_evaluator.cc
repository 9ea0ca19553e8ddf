#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "genqa/error.h"
#include "genqa/evaluator.h"
#include "genqa/random.h"

using namespace genqa;
namespace fs = std::filesystem;

namespace {

QAExample qa(std::string id, std::string gold) {
  QAExample e{std::move(id), "what is the thing", {}, std::move(gold)};
  e.candidates = {{"it is red", true}, {"it is blue", false}};
  return e;
}

GenerationRecord gen(std::string id, std::string text, std::optional<std::string> b = std::nullopt) {
  return {std::move(id), std::move(text), std::move(b), -1.0, std::nullopt};
}

}  // namespace

TEST_CASE("BLEU reference values") {
  // Values from an independent reference implementation of the same formula.
  CHECK(bleu("the cat sat on the mat", {"the cat is on the mat"}) == doctest::Approx(48.54917717073234));
  CHECK(bleu("the cat sat on the mat", {"the cat is on the mat", "a cat sat on a mat"}) ==
        doctest::Approx(62.23329772884784));
  CHECK(bleu("the cat", {"the cat sat on the mat"}) == doctest::Approx(13.53352832366127));
  CHECK(bleu("the the the the", {"the cat"}) == doctest::Approx(31.94715521231363));
  // Equidistant references: the shorter one sets the brevity penalty.
  CHECK(bleu("a b c d e", {"a b c d e f g h", "x y"}) == doctest::Approx(100.0));
}

TEST_CASE("BLEU edge cases") {
  CHECK(bleu("a b c", {"a b c"}) == doctest::Approx(100.0));
  CHECK(bleu("a", {"a"}) == doctest::Approx(100.0));
  CHECK(bleu("x y z", {"a b c"}) == 0.0);
  CHECK(bleu("", {"a b c"}) == 0.0);
  CHECK_THROWS_AS(bleu("a", std::vector<std::string>{}), Error);
}

TEST_CASE("BLEU is symmetric in reference order and bounded") {
  Rng rng(8);
  const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  auto sentence = [&] {
    std::string s;
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[rng.below(words.size())];
    return s;
  };
  for (int i = 0; i < 100; ++i) {
    const auto c = sentence(), r1 = sentence(), r2 = sentence(), r3 = sentence();
    const double a = bleu(c, {r1, r2, r3});
    CHECK(a == bleu(c, {r3, r1, r2}));
    CHECK(a == bleu(c, {r2, r3, r1}));
    CHECK(a >= 0.0);
    CHECK(a <= 100.0 + 1e-9);
    CHECK(bleu(c, {c}) == doctest::Approx(100.0));
  }
}

TEST_CASE("pearson and spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 5, 4, 5};
  CHECK(pearson(x, y) == doctest::Approx(0.7745966692414834));
  CHECK(spearman(x, y) == doctest::Approx(0.7378647873726218));
  std::vector<double> up, down;
  for (double v : x) {
    up.push_back(3.0 * v - 7.0);
    down.push_back(-0.5 * v + 2.0);
  }
  CHECK(std::abs(pearson(x, up) - 1.0) < 1e-9);
  CHECK(std::abs(pearson(x, down) + 1.0) < 1e-9);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 1, 1, 1, 1}), Error);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), Error);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), Error);
}

TEST_CASE("accuracy is the micro-average of per-example means") {
  const std::vector<Judgment> j{{"a", "", {1}}, {"b", "", {0, 1}}, {"c", "", {1, 1, 1}}, {"d", "", {0}}};
  CHECK(accuracy(j) == doctest::Approx((1 + 0.5 + 1 + 0) / 4.0));
  CHECK_THROWS_AS(accuracy(std::vector<Judgment>{}), Error);
  CHECK_THROWS_AS(accuracy(std::vector<Judgment>{{"a", "", {}}}), Error);
}

TEST_CASE("judging uses the correctness oracle") {
  const std::vector<QAExample> corpus{qa("q1", "red"), qa("q2", "deep blue")};
  const std::vector<GenerationRecord> gens{gen("q2", "it is deep blue"), gen("q1", "it is blue")};
  const auto j = judge_all(gens, corpus);
  REQUIRE(j.size() == 2);
  CHECK(j[0].verdicts == std::vector<int>{1});
  CHECK(j[1].verdicts == std::vector<int>{0});
  CHECK_THROWS_AS(judge_all(std::vector<GenerationRecord>{gen("q9", "x")}, corpus), Error);
}

TEST_CASE("bucket clusters decompose overall accuracy") {
  const std::vector<GenerationRecord> gens{gen("a", "x", "[_YES_]"), gen("b", "x", "[_YES_]"), gen("c", "x", "[_NO_]"),
                                           gen("d", "x")};
  const std::vector<Judgment> j{{"a", "x", {1}}, {"b", "x", {0}}, {"c", "x", {0}}, {"d", "x", {1}}};
  const auto t = bucket_cluster_accuracy(gens, j);
  CHECK(t.at("[_YES_]") == BucketCell{2, 0.5});
  CHECK(t.at("[_NO_]") == BucketCell{1, 0.0});
  CHECK(t.at("none") == BucketCell{1, 1.0});
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& [k, c] : t) {
    weighted += c.accuracy * static_cast<double>(c.count);
    total += c.count;
  }
  CHECK(weighted / static_cast<double>(total) == doctest::Approx(accuracy(j)));
  std::vector<Judgment> shuffled{j[1], j[0], j[2], j[3]};
  CHECK_THROWS_AS(bucket_cluster_accuracy(gens, shuffled), Error);
}

TEST_CASE("bucket order correlation") {
  BucketTable t{{"[_YES_]", {10, 0.9}}, {"[_PROBABLY_]", {10, 0.7}}, {"[_MAYBE_]", {10, 0.5}}};
  CHECK(*bucket_order_correlation(t) == doctest::Approx(1.0));
  t["[_DOUBT_]"] = {5, 0.8};
  CHECK(*bucket_order_correlation(t) == doctest::Approx(0.4));
  CHECK_FALSE(bucket_order_correlation(BucketTable{{"[_YES_]", {3, 1.0}}}).has_value());
  CHECK_FALSE(bucket_order_correlation(BucketTable{{"[_YES_]", {3, 0.5}}, {"[_NO_]", {3, 0.5}}}).has_value());
  CHECK_FALSE(bucket_order_correlation(BucketTable{{"[_YES_]", {3, 0.5}}, {"none", {3, 0.1}}}).has_value());
}

TEST_CASE("copy similarity against the fed candidates") {
  const auto v = Vocabulary::build(std::vector<std::string>{"q", "a", "b", "c", "d", "e"});
  ShapedExample s;
  s.example_id = "x";
  s.input_ids = v.encode("q [SEP] [_YES_] a b [SEP] [_NO_] c d [SEP] [_MAYBE_] a e");
  const std::vector<ShapedExample> inputs{s};
  const auto t = copy_similarity(std::vector<GenerationRecord>{gen("x", "a b", "[_YES_]")}, inputs, v);
  REQUIRE(t.at("[_YES_]").size() == 3);
  CHECK(t.at("[_YES_]")[0] == doctest::Approx(100.0));
  CHECK(t.at("[_YES_]")[1] == 0.0);
  CHECK(t.at("[_YES_]")[2] == doctest::Approx(bleu("a b", {"a e"})));
}

TEST_CASE("reports round trip through JSON") {
  EvalReport r;
  r.accuracy = 0.75;
  r.n = 4;
  r.p_at_1 = 0.5;
  r.bleu_vs_gold = 12.5;
  r.bucket_table = {{"[_YES_]", {2, 0.5}}};
  r.copy_table = {{"[_YES_]", {1.0, 2.0, 3.0, 4.0}}};
  r.correlations = {{"bleurt", 0.6}};
  r.config_echo = {{"beam", "5"}};
  CHECK(parse_report(to_json(r)) == r);
  CHECK(format_report(r).find("0.75") != std::string::npos);
}

TEST_CASE("annotation CSV quoting round trips") {
  const std::vector<AnnotationRow> rows{{"what, exactly?", "a \"quoted\" answer", "line\nbreak", "q1"},
                                        {"plain", "", "ref", "q2"}};
  const auto text = to_csv(rows);
  CHECK(text.rfind("question,answer,reference,example_id\r\n", 0) == 0);
  CHECK(text.find("\"a \"\"quoted\"\" answer\"") != std::string::npos);
  CHECK(parse_csv(text) == rows);
}

TEST_CASE("annotation rows use the first gold candidate as reference") {
  const std::vector<QAExample> corpus{qa("q1", "red")};
  const auto rows = annotation_rows(std::vector<GenerationRecord>{gen("q1", "red it is")}, corpus);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].reference == "it is red");
  CHECK(rows[0].question == "what is the thing");
}

TEST_CASE("external metric scores file") {
  const auto path = fs::temp_directory_path() / "genqa_metric.jsonl";
  {
    std::ofstream out(path);
    out << "{\"id\": \"a\", \"score\": 0.5}\n{\"id\": \"b\", \"score\": 0.25}\n";
  }
  const auto m = read_metric_scores(path);
  CHECK(m.at("a") == 0.5);
  CHECK(m.at("b") == 0.25);
}
