#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "genqa/corpus.h"
#include "genqa/scorer.h"
#include "genqa/vocab.h"

namespace genqa {

// Maps a teacher score in [0, 1] to its confidence bucket. Throws Error for
// scores outside the range.
BucketLabel bucket(double score, int levels = 5);

struct ShapingConfig {
  std::size_t k = 5;
  bool sci = false;
  bool sco = false;
  int levels = 5;
  std::size_t max_input_tokens = 512;
};

void validate(const ShapingConfig& cfg);

struct ShapedExample {
  std::string example_id;
  std::vector<TokenId> input_ids;
  std::vector<TokenId> target_ids;
  double weight = 0.0;  // raw teacher score of the target
  BucketLabel target_bucket;
  std::size_t k_used = 0;

  bool operator==(const ShapedExample&) const = default;
};

// Input: question [SEP] (b_2) c_2 [SEP] ... [SEP] (b_{k+1}) c_{k+1}
// Target: (b_1) c_1 [EOS]
// where c_j is the j-th ranked candidate and b_j its bucket token.
ShapedExample shape(const QAExample& example, const RankedCandidates& ranked, const ShapingConfig& cfg,
                    const Vocabulary& vocab);

struct DatasetStats {
  std::size_t n = 0;
  std::size_t skipped = 0;
  double z = 1.0;  // mean weight; 1.0 on an empty dataset
  double max_weight = 0.0;
  std::map<std::string, std::size_t> bucket_histogram;

  bool operator==(const DatasetStats&) const = default;
};

struct Dataset {
  std::vector<ShapedExample> examples;
  DatasetStats stats;
};

// Ranks every example with `scorer` and shapes it. Examples with fewer than
// k + 1 candidates are skipped and counted. Output order follows the corpus.
Dataset build_dataset(std::span<const QAExample> corpus, const Scorer& scorer, const ShapingConfig& cfg,
                      const Vocabulary& vocab);

// Vocabulary over every token of the corpus (questions and candidates).
Vocabulary corpus_vocabulary(std::span<const QAExample> corpus, int levels = 5);

// Splits a shaped input back into its context candidates (bucket prefixes
// removed), in input order.
std::vector<std::vector<TokenId>> context_candidates(std::span<const TokenId> input_ids, const Vocabulary& vocab);

std::string to_json_line(const ShapedExample& example);
void write_dataset(std::span<const ShapedExample> examples, const std::filesystem::path& path);
std::vector<ShapedExample> read_dataset(const std::filesystem::path& path, const Vocabulary& vocab);

std::string to_json(const DatasetStats& stats);
void write_stats(const DatasetStats& stats, const std::filesystem::path& path);
DatasetStats read_stats(const std::filesystem::path& path);

}  // namespace genqa
