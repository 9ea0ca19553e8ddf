#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genqa/corpus.h"

namespace genqa {

// The answer-ranking teacher. Implementations must be pure functions of
// their inputs (any randomness hash-derived) and return values in [0, 1].
// score() may be called concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::string_view question, std::string_view answer) const = 0;
  virtual std::string name() const = 0;
};

// Maps score() over an example's candidates in candidate order.
std::vector<double> score_candidates(const Scorer& scorer, const QAExample& example);

struct RankedEntry {
  std::size_t index;  // position in QAExample::candidates
  double score;

  bool operator==(const RankedEntry&) const = default;
};

// Candidates by descending score; ties keep ascending original index.
struct RankedCandidates {
  std::string example_id;
  std::vector<RankedEntry> ordered;

  const RankedEntry& top() const { return ordered.front(); }
};

RankedCandidates rank(const QAExample& example, const Scorer& scorer);
RankedCandidates rank_scores(std::string example_id, std::span<const double> scores);

// Fraction of rankings whose top candidate carries gold_label = true.
double precision_at_1(std::span<const RankedCandidates> ranked, std::span<const QAExample> corpus);

// --- oracle teacher -----------------------------------------------------------

struct OracleScorerConfig {
  double mean_correct = 0.9;
  double mean_incorrect = 0.1;
  double spread = 0.05;
  double flip_prob = 0.0;
  std::uint64_t seed = 0;
  // Confidence tied to answer redundancy: the centre for answers judged
  // correct moves from mean_correct toward mean_incorrect as the share of
  // correct candidates in the example shrinks. 0 disables it.
  double agreement_weight = 0.0;
};

void validate(const OracleScorerConfig& cfg);

// Deterministic in (cfg.seed, q, a): the class centre plus uniform noise of
// half-width `spread`, clamped to [0, 1]. Throws if the example has no gold
// value.
double oracle_score(std::string_view question, std::string_view answer, const QAExample& example,
                    const OracleScorerConfig& cfg);

// Looks up examples by question text. Questions must be unique.
class ExampleIndex {
 public:
  explicit ExampleIndex(std::span<const QAExample> corpus);
  const QAExample& at(std::string_view question) const;
  bool contains(std::string_view question) const;

 private:
  std::vector<QAExample> examples_;
  std::unordered_map<std::string, std::size_t> by_question_;
};

class OracleScorer final : public Scorer {
 public:
  OracleScorer(std::shared_ptr<const ExampleIndex> index, OracleScorerConfig cfg);
  double score(std::string_view question, std::string_view answer) const override;
  std::string name() const override { return "oracle"; }
  const OracleScorerConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const ExampleIndex> index_;
  OracleScorerConfig cfg_;
};

// A teacher that, for a hash-selected share of questions, promotes one
// incorrect candidate to the top of the ranking while giving it a low
// score. All other candidates of such a question are scaled below it, so the
// context ordering stays label-consistent. Answers that are not candidates
// of the example are scored by the base oracle.
struct CorruptingTeacherConfig {
  OracleScorerConfig base;
  double corrupt_rate = 0.3;
  double top_low = 0.15;
  double top_high = 0.35;
};

class CorruptingTeacher final : public Scorer {
 public:
  CorruptingTeacher(std::shared_ptr<const ExampleIndex> index, CorruptingTeacherConfig cfg);
  double score(std::string_view question, std::string_view answer) const override;
  std::string name() const override { return "corrupting"; }

  // True iff the question's top target is replaced by a promoted distractor.
  bool corrupted(const QAExample& example) const;

 private:
  // Index of the promoted distractor, or npos when the example has none.
  std::size_t promoted(const QAExample& example) const;

  std::shared_ptr<const ExampleIndex> index_;
  CorruptingTeacherConfig cfg_;
};

// --- label-free baseline -------------------------------------------------------

// Token-multiset F1 between question and answer.
double overlap_score(std::string_view question, std::string_view answer);

class OverlapScorer final : public Scorer {
 public:
  double score(std::string_view question, std::string_view answer) const override {
    return overlap_score(question, answer);
  }
  std::string name() const override { return "overlap"; }
};

// --- scores cache file ---------------------------------------------------------

struct ScoreRecord {
  std::string id;
  std::vector<double> scores;  // aligned with candidate order
};

void write_scores(std::span<const ScoreRecord> records, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

}  // namespace genqa
