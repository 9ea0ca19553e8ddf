#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genqa/corpus.h"
#include "genqa/decoder.h"
#include "genqa/shaping.h"
#include "genqa/vocab.h"

namespace genqa {

// Cluster key for generations that carry no bucket token.
inline constexpr std::string_view kNoBucket = "none";

struct Judgment {
  std::string example_id;
  std::string answer_text;
  std::vector<int> verdicts;  // one per annotator, each 0 or 1

  bool operator==(const Judgment&) const = default;
};

// Mean over examples of the per-example mean verdict. Throws on empty input
// or on a judgment without verdicts.
double accuracy(std::span<const Judgment> judgments);

// Single-verdict judgment from the correctness oracle.
Judgment judge(const GenerationRecord& generation, const QAExample& example);
// Judges every generation against the corpus entry with the same id.
std::vector<Judgment> judge_all(std::span<const GenerationRecord> generations, std::span<const QAExample> corpus);

// Sentence BLEU-4 in [0, 100]: clipped n-gram precisions over all
// references, add-one smoothing for n >= 2, brevity penalty against the
// closest reference length (shorter wins ties). An empty candidate scores 0.
// Throws on an empty reference list.
double bleu(std::string_view candidate, std::span<const std::string> references);
double bleu(std::string_view candidate, std::initializer_list<std::string> references);

struct BucketCell {
  std::size_t count = 0;
  double accuracy = 0.0;

  bool operator==(const BucketCell&) const = default;
};
using BucketTable = std::map<std::string, BucketCell>;

// Groups by the generation's bucket token (or "none") and reports per-cluster
// count and accuracy. Judgments align with generations by position.
BucketTable bucket_cluster_accuracy(std::span<const GenerationRecord> generations,
                                    std::span<const Judgment> judgments);

// Per bucket cluster, the mean BLEU of the generation against each of the
// first (up to) four context candidates of its shaped input.
using CopyTable = std::map<std::string, std::vector<double>>;
CopyTable copy_similarity(std::span<const GenerationRecord> generations, std::span<const ShapedExample> inputs,
                          const Vocabulary& vocab);

// Sample Pearson correlation. Throws on mismatched or short inputs and on
// zero variance.
double pearson(std::span<const double> xs, std::span<const double> ys);
// Pearson over average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

// Spearman correlation between bucket confidence (most confident first) and
// cluster accuracy over the bucket clusters present. nullopt when fewer than
// two clusters exist or either side is constant.
std::optional<double> bucket_order_correlation(const BucketTable& table, int levels = 5);

struct EvalReport {
  double accuracy = 0.0;
  std::size_t n = 0;
  std::optional<double> p_at_1;
  std::optional<double> bleu_vs_gold;
  std::optional<double> bleu_vs_as2_top;
  BucketTable bucket_table;
  CopyTable copy_table;
  std::map<std::string, double> correlations;
  std::map<std::string, std::string> config_echo;

  bool operator==(const EvalReport&) const = default;
};

std::string to_json(const EvalReport& report);
EvalReport parse_report(const std::string& text);
// Human-readable summary for standard output.
std::string format_report(const EvalReport& report);
// Writes the JSON document to `path`.
void emit_report(const EvalReport& report, const std::filesystem::path& path);

// --- annotation export ----------------------------------------------------------

struct AnnotationRow {
  std::string question;
  std::string answer;
  std::string reference;
  std::string example_id;

  bool operator==(const AnnotationRow&) const = default;
};

// Reference is the first gold-labeled candidate when labels exist.
std::vector<AnnotationRow> annotation_rows(std::span<const GenerationRecord> generations,
                                           std::span<const QAExample> corpus);
// CSV with header question,answer,reference,example_id; RFC 4180 quoting.
std::string to_csv(std::span<const AnnotationRow> rows);
std::vector<AnnotationRow> parse_csv(std::string_view text);
void emit_annotation_csv(std::span<const GenerationRecord> generations, std::span<const QAExample> corpus,
                         const std::filesystem::path& path);

// --- external metrics -----------------------------------------------------------

// Line-delimited {"id": str, "score": real}.
std::map<std::string, double> read_metric_scores(const std::filesystem::path& path);

}  // namespace genqa
