#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "genqa/corpus.h"
#include "genqa/decoder.h"
#include "genqa/evaluator.h"
#include "genqa/model.h"
#include "genqa/scorer.h"
#include "genqa/shaping.h"
#include "genqa/trainer.h"

// Desk-scale experiments over the synthetic world, shared by the `repro`
// command and the acceptance suite. Every experiment is a pure function of
// its seeds.
namespace genqa {

struct ExperimentOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::ostream* progress = nullptr;  // one line per finished stage
};

// One train-then-evaluate cycle on a train/eval split of a generated corpus.
struct MicroRunSpec {
  CorpusConfig corpus;
  std::size_t n_eval = 500;  // the last n_eval questions are held out
  ShapingConfig shaping;
  ModelConfig model;         // vocab_size is filled in from the corpus
  TrainConfig train;
  DecodeConfig decode;
};

struct MicroRunResult {
  double accuracy = 0.0;
  double teacher_p_at_1 = 0.0;  // on the held-out questions
  std::vector<GenerationRecord> generations;
  std::vector<Judgment> judgments;
  BucketTable bucket_table;
  TrainResult training;
  double seconds = 0.0;
};

// Splits `corpus` (generated from spec.corpus), ranks both parts with
// `teacher`, trains, and judges the decoded held-out answers. The held-out
// part doubles as the dev set for checkpoint metrics when `dev_scorer` is
// given.
MicroRunResult run_micro(const MicroRunSpec& spec, std::span<const QAExample> corpus, const Scorer& teacher,
                         const Scorer* dev_scorer = nullptr);

// Baseline configurations of the bundled experiments.
MicroRunSpec ws_learning_spec(std::uint64_t seed);
MicroRunSpec ws_vs_lw_spec(std::uint64_t seed, bool lw);
MicroRunSpec sco_monotonic_spec(std::uint64_t seed);
MicroRunSpec ckpt_selection_spec(std::uint64_t seed);

// Teachers of the bundled experiments.
OracleScorerConfig ws_learning_teacher(std::uint64_t seed);
CorruptingTeacherConfig ws_vs_lw_teacher(std::uint64_t seed);
OracleScorerConfig sco_monotonic_teacher(std::uint64_t seed);
OracleScorerConfig ckpt_selection_teacher(std::uint64_t seed);

struct WsLearningReport {
  double accuracy = 0.0;
  double teacher_p_at_1 = 0.0;
  std::size_t n_eval = 0;
  double seconds = 0.0;
  bool pass = false;  // accuracy >= 0.90
};
WsLearningReport run_ws_learning(std::uint64_t seed, std::ostream* progress = nullptr);

struct WsVsLwReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> ws, lw;
  double ws_mean = 0.0, lw_mean = 0.0, gain = 0.0;
  bool pass = false;  // gain >= 0.02
};
WsVsLwReport run_ws_vs_lw(const ExperimentOptions& opts);

struct ScoMonotonicReport {
  std::vector<std::uint64_t> seeds;
  std::vector<BucketTable> tables;
  std::vector<std::optional<double>> spearman;
  double mean_spearman = 0.0;  // undefined seeds count as 0
  std::size_t min_eval = 0;
  bool pass = false;  // mean_spearman > 0
};
ScoMonotonicReport run_sco_monotonic(const ExperimentOptions& opts);

struct CkptSelectionReport {
  std::vector<CheckpointRecord> records;
  std::vector<double> accuracy;  // oracle accuracy of each checkpoint
  std::size_t by_loss = 0, by_as2 = 0;
  bool disagree = false;
};
CkptSelectionReport run_ckpt_selection(std::uint64_t seed, std::ostream* progress = nullptr);

std::string format_report(const WsLearningReport& r);
std::string format_report(const WsVsLwReport& r);
std::string format_report(const ScoMonotonicReport& r);
std::string format_report(const CkptSelectionReport& r);

}  // namespace genqa
