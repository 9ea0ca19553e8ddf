#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genqa/model.h"
#include "genqa/vocab.h"

namespace genqa {

struct DecodeConfig {
  std::size_t beam_width = 5;
  std::size_t min_len = 6;
  std::size_t max_len = 100;
  std::optional<TokenId> force_first_token;
  // Whether a leading bucket token counts toward the length window.
  bool length_counts_bucket = false;
  // Whether the model may open with a bucket token on its own.
  bool allow_leading_bucket = true;
};

void validate(const DecodeConfig& cfg);

struct Generation {
  std::vector<TokenId> token_ids;  // as generated, [EOS] included when emitted
  std::string text;                // content only: no bucket, no specials
  std::optional<BucketLabel> bucket;
  double log_prob = 0.0;
  bool finished = false;  // false when cut at max_len
};

struct BeamResult {
  Generation best;
  std::vector<Generation> n_best;  // sorted by log_prob, best first
};

Generation greedy(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                  std::span<const TokenId> input_ids, const DecodeConfig& cfg);
BeamResult beam(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                std::span<const TokenId> input_ids, const DecodeConfig& cfg);
// Runs beam (or greedy when beam_width = 1) with cfg.force_first_token set.
Generation forced_decode(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                         std::span<const TokenId> input_ids, const DecodeConfig& cfg);
// One forced generation per bucket token, most confident bucket first.
std::vector<Generation> forced_sweep(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                                     std::span<const TokenId> input_ids, const DecodeConfig& cfg);
// beam_width = 1 dispatches to greedy.
Generation decode(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                  std::span<const TokenId> input_ids, const DecodeConfig& cfg);

struct Stripped {
  std::optional<BucketLabel> bucket;
  std::vector<TokenId> content;
};

// Splits off a leading bucket token (only the first token) and drops [EOS],
// [PAD] and anything after [EOS].
Stripped strip_bucket(std::span<const TokenId> tokens, const Vocabulary& vocab);

// --- generations file --------------------------------------------------------------

struct GenerationRecord {
  std::string id;
  std::string text;
  std::optional<std::string> bucket;
  double log_prob = 0.0;
  std::optional<std::string> forced;

  bool operator==(const GenerationRecord&) const = default;
};

GenerationRecord to_record(const std::string& id, const Generation& g, const Vocabulary& vocab,
                           const std::optional<TokenId>& forced);
void write_generations(std::span<const GenerationRecord> records, const std::filesystem::path& path);
std::vector<GenerationRecord> read_generations(const std::filesystem::path& path);

}  // namespace genqa
