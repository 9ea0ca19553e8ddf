#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genqa/checkpoint.h"
#include "genqa/decoder.h"
#include "genqa/model.h"
#include "genqa/scorer.h"
#include "genqa/shaping.h"

namespace genqa {

enum class OptimizerKind { kSgd, kAdam };
enum class ZMode { kMean, kMax, kOne };

struct TrainConfig {
  double lr = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  // Stops early once this many optimizer steps ran (0 = no cap).
  std::size_t max_steps = 0;
  bool lw_enabled = false;
  ZMode z_mode = ZMode::kMean;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  std::optional<double> grad_clip;   // global L2 norm
  LossVariant loss_variant = LossVariant::kCrossEntropy;
  // Dev questions scored per checkpoint (0 = all).
  std::size_t dev_sample = 0;
};

void validate(const TrainConfig& cfg);

std::string to_string(ZMode mode);
ZMode parse_z_mode(const std::string& text);
std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

// Normalizer for the loss weights: mean or max of the training weights, or 1.
double compute_z(const DatasetStats& stats, ZMode mode);

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const Parameters& like);
  // Applies one update in place. Gradients may be clipped in place.
  void step(Parameters& params, Parameters& grads);
  std::size_t steps() const { return t_; }

 private:
  TrainConfig cfg_;
  Parameters m_, v_;
  std::size_t t_ = 0;
};

// Global L2 norm over all gradient tensors.
double gradient_norm(const Parameters& grads);

// Held-out material for checkpoint metrics.
struct DevSet {
  std::vector<ShapedExample> shaped;
  std::vector<std::string> questions;  // aligned with `shaped`
};

DevSet make_dev_set(std::span<const QAExample> corpus, const Dataset& shaped);

struct CheckpointRecord {
  std::string path;
  std::size_t step = 0;
  double dev_loss = 0.0;
  std::optional<double> avg_as2_score;

  bool operator==(const CheckpointRecord&) const = default;
};

struct As2ScoreResult {
  double mean = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;
};

// Decodes one answer per dev question, drops any leading bucket token and
// averages the teacher's scores. Throws on an empty dev set.
As2ScoreResult avg_as2_score(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                             const DevSet& dev, const Scorer& scorer, const DecodeConfig& decode_cfg,
                             std::size_t sample = 0);

enum class SelectionCriterion { kLoss, kAs2 };
SelectionCriterion parse_criterion(const std::string& text);

// loss: argmin dev_loss; as2: argmax avg_as2_score. Ties go to the earliest
// step. Returns the index into `records`.
std::size_t select_checkpoint(std::span<const CheckpointRecord> records, SelectionCriterion criterion);

struct StepLog {
  std::size_t step;
  double loss;
  double lr;
};

struct TrainResult {
  std::vector<CheckpointRecord> records;
  std::vector<StepLog> log;
  Parameters final_params;
  // Parameters at each record, kept only when no output directory is given.
  std::vector<Parameters> snapshots;
};

struct TrainInputs {
  const Dataset* train = nullptr;
  const DevSet* dev = nullptr;        // required
  const Scorer* scorer = nullptr;     // optional: enables avg_as2_score
  const Vocabulary* vocab = nullptr;  // required
  DecodeConfig checkpoint_decode = greedy_decode_config();
  // When set, checkpoints, the training log and the records file go here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const StepLog&)> on_step;

  static DecodeConfig greedy_decode_config() {
    DecodeConfig d;
    d.beam_width = 1;
    return d;
  }
};

TrainResult train(const TrainInputs& inputs, const ModelConfig& model_cfg, const TrainConfig& cfg);

// --- files -----------------------------------------------------------------------

void write_records(std::span<const CheckpointRecord> records, const std::filesystem::path& path);
std::vector<CheckpointRecord> read_records(const std::filesystem::path& path);
void append_step_log(std::ostream& out, const StepLog& entry);

// Flat "key = value" configuration; '#' starts a comment.
std::map<std::string, std::string> read_kv_config(const std::filesystem::path& path);
// Applies recognised keys, throws ConfigError on unknown keys or bad values.
void apply_kv(const std::map<std::string, std::string>& kv, TrainConfig& train, ModelConfig& model);

}  // namespace genqa
