#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genqa/shaping.h"
#include "genqa/vocab.h"

namespace genqa {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t n_layers = 1;
  bool attention = true;
  std::size_t max_positions = 256;
  std::uint64_t seed = 0;
  int float_width = 64;  // 32 keeps parameters representable as float

  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& cfg);

// One GRU layer. Gate blocks are stacked [reset; update; candidate].
struct GruLayer {
  Eigen::MatrixXd w_x;  // 3H x in
  Eigen::MatrixXd w_h;  // 3H x H
  Eigen::VectorXd b_x;  // 3H
  Eigen::VectorXd b_h;  // 3H
};

// Encoder-decoder parameters. The embedding table is shared by the encoder
// and the decoder.
struct Parameters {
  Eigen::MatrixXd embedding;  // V x E
  std::vector<GruLayer> encoder;
  std::vector<GruLayer> decoder;
  Eigen::MatrixXd combine_w;  // H x (2H + E) with attention, H x H without
  Eigen::VectorXd combine_b;  // H
  Eigen::MatrixXd output_w;   // V x H
  Eigen::VectorXd output_b;   // V

  // Calls f(name, tensor) for every tensor in a fixed order. Tensors are
  // Eigen::MatrixXd or Eigen::VectorXd.
  template <typename F>
  void for_each(F&& f);
  template <typename F>
  void for_each(F&& f) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

Parameters init_parameters(const ModelConfig& cfg);
Parameters zeros_like(const Parameters& p);
// Rounds every parameter to the nearest float.
void round_to_float(Parameters& p);

// --- forward ---------------------------------------------------------------------

struct GruStep {
  Eigen::VectorXd x, h_prev, r, z, n, gh_n, h;
};

struct DecoderStepCache {
  std::vector<GruStep> layers;
  Eigen::VectorXd alpha;     // attention weights over encoder positions
  Eigen::VectorXd context;   // attended encoder state
  Eigen::VectorXd word_context;  // attended input embedding
  Eigen::VectorXd combined;  // tanh output feeding the vocabulary projection
};

struct ForwardCache {
  std::vector<TokenId> encoder_tokens;       // input with [PAD] removed
  std::vector<std::vector<GruStep>> encoder;  // [layer][position]
  Eigen::MatrixXd encoder_states;             // H x T_in, top layer
  Eigen::MatrixXd encoder_embedded;           // E x T_in, input embeddings
  std::vector<TokenId> decoder_inputs;
  std::vector<DecoderStepCache> steps;
  Eigen::MatrixXd logits;  // T_out x V
};

// [BOS] followed by all but the last target token.
std::vector<TokenId> shift_right(std::span<const TokenId> target_ids);

// Teacher-forced logits: row r sees the whole input and decoder inputs <= r.
// [PAD] input positions are masked out.
Eigen::MatrixXd forward(const Parameters& params, const ModelConfig& cfg, std::span<const TokenId> input_ids,
                        std::span<const TokenId> shifted_targets);
ForwardCache forward_cached(const Parameters& params, const ModelConfig& cfg, std::span<const TokenId> input_ids,
                            std::span<const TokenId> shifted_targets);

// Incremental decoding.
struct EncodedInput {
  Eigen::MatrixXd states;                    // H x T_in
  Eigen::MatrixXd embedded;                  // E x T_in
  std::vector<Eigen::VectorXd> final_states;  // per layer
};

struct DecoderState {
  std::vector<Eigen::VectorXd> hidden;  // per layer
};

EncodedInput encode(const Parameters& params, const ModelConfig& cfg, std::span<const TokenId> input_ids);
DecoderState initial_state(const EncodedInput& encoded);
// Logits for the next token after feeding `prev`; writes the advanced state.
Eigen::VectorXd step_logits(const Parameters& params, const ModelConfig& cfg, const EncodedInput& encoded,
                            const DecoderState& state, TokenId prev, DecoderState& next);

// --- losses ----------------------------------------------------------------------

enum class LossVariant {
  kCrossEntropy,
  // Non-gold vocabulary entries weighted by -1 instead of 0. Unbounded
  // below; kept only for experimentation.
  kLiteralSigned,
};

struct LossBreakdown {
  std::vector<double> per_token_nll;
  double sequence_loss = 0.0;
  double weighted_loss = 0.0;
  double weight_used = 1.0;
};

LossBreakdown loss_lg(const Eigen::MatrixXd& logits, std::span<const TokenId> target_ids,
                      LossVariant variant = LossVariant::kCrossEntropy);
// weighted_loss = (weight / z) * sequence_loss.
LossBreakdown loss_weighted(LossBreakdown breakdown, double weight, double z);
// d sequence_loss / d logits. [PAD] rows are zero.
Eigen::MatrixXd loss_lg_grad(const Eigen::MatrixXd& logits, std::span<const TokenId> target_ids,
                             LossVariant variant = LossVariant::kCrossEntropy);

// Row-wise log-softmax.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

// --- gradients -------------------------------------------------------------------

// Adds scale * d(loss)/d(params) to `grads`, where dlogits = d(loss)/d(logits).
void backprop(const Parameters& params, const ForwardCache& cache, const Eigen::MatrixXd& dlogits, double scale,
              Parameters& grads);

struct LossOptions {
  bool loss_weighting = false;
  double z = 1.0;
  LossVariant variant = LossVariant::kCrossEntropy;
};

struct BatchLoss {
  double loss = 0.0;  // mean over examples of the (weighted) sequence loss
  std::vector<LossBreakdown> per_example;
};

// Exact gradient of the batch loss, written into `grads` (resized and zeroed).
// Examples are reduced in batch order. Throws Error on a non-finite loss.
BatchLoss backward(const Parameters& params, const ModelConfig& cfg, std::span<const ShapedExample> batch,
                   const LossOptions& opts, Parameters& grads);

// Batch loss without gradients.
BatchLoss evaluate_loss(const Parameters& params, const ModelConfig& cfg, std::span<const ShapedExample> batch,
                        const LossOptions& opts);

// --- template definitions --------------------------------------------------------

template <typename F>
void Parameters::for_each(F&& f) {
  f(std::string("embedding"), embedding);
  auto layers = [&f](const char* prefix, std::vector<GruLayer>& ls) {
    for (std::size_t i = 0; i < ls.size(); ++i) {
      const std::string p = std::string(prefix) + std::to_string(i) + ".";
      f(p + "w_x", ls[i].w_x);
      f(p + "w_h", ls[i].w_h);
      f(p + "b_x", ls[i].b_x);
      f(p + "b_h", ls[i].b_h);
    }
  };
  layers("encoder.", encoder);
  layers("decoder.", decoder);
  f(std::string("combine.w"), combine_w);
  f(std::string("combine.b"), combine_b);
  f(std::string("output.w"), output_w);
  f(std::string("output.b"), output_b);
}

template <typename F>
void Parameters::for_each(F&& f) const {
  const_cast<Parameters*>(this)->for_each([&f](const std::string& name, auto& t) {
    const auto& ct = t;
    f(name, ct);
  });
}

}  // namespace genqa
