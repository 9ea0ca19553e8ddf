#include "genqa/model.h"

#include <cmath>
#include <limits>

#include "genqa/error.h"
#include "genqa/random.h"

namespace genqa {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void validate(const ModelConfig& cfg) {
  if (cfg.vocab_size < static_cast<std::size_t>(special::kFirstWord))
    throw ConfigError("vocab_size", "must be at least 10 (the reserved tokens)");
  if (cfg.embed_dim == 0) throw ConfigError("embed_dim", "must be positive");
  if (cfg.hidden_dim == 0) throw ConfigError("hidden_dim", "must be positive");
  if (cfg.n_layers == 0) throw ConfigError("n_layers", "must be positive");
  if (cfg.max_positions == 0) throw ConfigError("max_positions", "must be positive");
  if (cfg.float_width != 32 && cfg.float_width != 64) throw ConfigError("float_width", "must be 32 or 64");
}

namespace {

// Normal(0, scale) truncated at three standard deviations.
void fill_normal(MatrixXd& m, Rng& rng, double scale) {
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) {
      double u1 = rng.uniform();
      double u2 = rng.uniform();
      double g = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * M_PI * u2);
      m(r, c) = std::clamp(g, -3.0, 3.0) * scale;
    }
}

GruLayer make_gru(std::size_t in, std::size_t hidden, Rng& rng) {
  const Index h = static_cast<Index>(hidden);
  GruLayer l;
  l.w_x.resize(3 * h, static_cast<Index>(in));
  l.w_h.resize(3 * h, h);
  fill_normal(l.w_x, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  fill_normal(l.w_h, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  l.b_x = VectorXd::Zero(3 * h);
  l.b_h = VectorXd::Zero(3 * h);
  return l;
}

VectorXd sigmoid(const VectorXd& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix(); }

void gru_forward(const GruLayer& layer, const VectorXd& x, const VectorXd& h, GruStep& s) {
  const Index n = h.size();
  VectorXd gx = layer.w_x * x + layer.b_x;
  VectorXd gh = layer.w_h * h + layer.b_h;
  s.x = x;
  s.h_prev = h;
  s.r = sigmoid(gx.head(n) + gh.head(n));
  s.z = sigmoid(gx.segment(n, n) + gh.segment(n, n));
  s.gh_n = gh.tail(n);
  s.n = (gx.tail(n) + s.r.cwiseProduct(s.gh_n)).array().tanh().matrix();
  s.h = (1.0 - s.z.array()).matrix().cwiseProduct(s.n) + s.z.cwiseProduct(h);
}

VectorXd gru_state(const GruLayer& layer, const VectorXd& x, const VectorXd& h) {
  GruStep s;
  gru_forward(layer, x, h, s);
  return std::move(s.h);
}

// Accumulates parameter gradients; returns dx and writes dh_prev.
VectorXd gru_backward(const GruLayer& layer, const GruStep& s, const VectorXd& dh, GruLayer& g, VectorXd& dh_prev) {
  const Index n = dh.size();
  VectorXd dn = dh.cwiseProduct((1.0 - s.z.array()).matrix());
  VectorXd dz = dh.cwiseProduct(s.h_prev - s.n);
  VectorXd da_n = dn.cwiseProduct((1.0 - s.n.array().square()).matrix());
  VectorXd dr = da_n.cwiseProduct(s.gh_n);
  VectorXd da_r = dr.cwiseProduct((s.r.array() * (1.0 - s.r.array())).matrix());
  VectorXd da_z = dz.cwiseProduct((s.z.array() * (1.0 - s.z.array())).matrix());

  VectorXd dgx(3 * n);
  dgx << da_r, da_z, da_n;
  VectorXd dgh(3 * n);
  dgh << da_r, da_z, da_n.cwiseProduct(s.r);

  g.w_x.noalias() += dgx * s.x.transpose();
  g.b_x += dgx;
  g.w_h.noalias() += dgh * s.h_prev.transpose();
  g.b_h += dgh;
  dh_prev = dh.cwiseProduct(s.z);
  dh_prev.noalias() += layer.w_h.transpose() * dgh;
  return layer.w_x.transpose() * dgx;
}

void check_ids(std::span<const TokenId> ids, const ModelConfig& cfg, const char* what) {
  if (ids.size() > cfg.max_positions)
    throw Error(std::string(what) + " length " + std::to_string(ids.size()) + " exceeds max_positions " +
                std::to_string(cfg.max_positions));
  for (TokenId id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw Error(std::string(what) + " contains out-of-range token id " + std::to_string(id));
}

std::vector<TokenId> strip_pad(std::span<const TokenId> ids) {
  std::vector<TokenId> out;
  out.reserve(ids.size());
  for (TokenId id : ids)
    if (id != special::kPad) out.push_back(id);
  return out;
}

// Attention and output projection for one decoder step. The attention
// weights pick encoder positions by their hidden states; the step reads both
// the attended states and the attended input embeddings, so the identity of
// the attended word reaches the output layer directly.
VectorXd attend_and_project(const Parameters& p, const ModelConfig& cfg, const MatrixXd& states,
                            const MatrixXd& embedded, const VectorXd& top, DecoderStepCache* cache) {
  VectorXd combined;
  if (cfg.attention) {
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    VectorXd scores = states.transpose() * top * inv_sqrt;
    VectorXd alpha = (scores.array() - scores.maxCoeff()).exp().matrix();
    alpha /= alpha.sum();
    VectorXd context = states * alpha;
    VectorXd word_context = embedded * alpha;
    const Index h = top.size();
    const Index e = word_context.size();
    VectorXd joint(2 * h + e);
    joint << top, context, word_context;
    combined = (p.combine_w * joint + p.combine_b).array().tanh().matrix();
    if (cache) {
      cache->alpha = std::move(alpha);
      cache->context = std::move(context);
      cache->word_context = std::move(word_context);
    }
  } else {
    combined = (p.combine_w * top + p.combine_b).array().tanh().matrix();
  }
  VectorXd logits = p.output_w * combined + p.output_b;
  if (cache) cache->combined = std::move(combined);
  return logits;
}

MatrixXd embed_columns(const Parameters& p, std::span<const TokenId> tokens) {
  MatrixXd out(p.embedding.cols(), static_cast<Index>(tokens.size()));
  for (std::size_t t = 0; t < tokens.size(); ++t) out.col(static_cast<Index>(t)) = p.embedding.row(tokens[t]).transpose();
  return out;
}

}  // namespace

Parameters init_parameters(const ModelConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const Index v = static_cast<Index>(cfg.vocab_size);
  const Index e = static_cast<Index>(cfg.embed_dim);
  const Index h = static_cast<Index>(cfg.hidden_dim);
  Parameters p;
  p.embedding.resize(v, e);
  fill_normal(p.embedding, rng, 1.0 / std::sqrt(static_cast<double>(e)));
  p.embedding.row(special::kPad).setZero();
  for (std::size_t i = 0; i < cfg.n_layers; ++i) p.encoder.push_back(make_gru(i == 0 ? cfg.embed_dim : cfg.hidden_dim, cfg.hidden_dim, rng));
  for (std::size_t i = 0; i < cfg.n_layers; ++i) p.decoder.push_back(make_gru(i == 0 ? cfg.embed_dim : cfg.hidden_dim, cfg.hidden_dim, rng));
  const Index combine_in = cfg.attention ? 2 * h + e : h;
  p.combine_w.resize(h, combine_in);
  fill_normal(p.combine_w, rng, 1.0 / std::sqrt(static_cast<double>(combine_in)));
  p.combine_b = VectorXd::Zero(h);
  p.output_w.resize(v, h);
  fill_normal(p.output_w, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  p.output_b = VectorXd::Zero(v);
  if (cfg.float_width == 32) round_to_float(p);
  return p;
}

Parameters zeros_like(const Parameters& p) {
  Parameters z = p;
  z.for_each([](const std::string&, auto& t) { t.setZero(); });
  return z;
}

void round_to_float(Parameters& p) {
  p.for_each([](const std::string&, auto& t) {
    for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(static_cast<float>(t.data()[i]));
  });
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&ok](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

std::vector<TokenId> shift_right(std::span<const TokenId> target_ids) {
  std::vector<TokenId> out{special::kBos};
  if (!target_ids.empty()) out.insert(out.end(), target_ids.begin(), target_ids.end() - 1);
  return out;
}

// --- encoder / decoder -------------------------------------------------------------

EncodedInput encode(const Parameters& p, const ModelConfig& cfg, std::span<const TokenId> input_ids) {
  check_ids(input_ids, cfg, "input");
  auto tokens = strip_pad(input_ids);
  if (tokens.empty()) throw Error("input has no non-[PAD] tokens");
  const Index h = static_cast<Index>(cfg.hidden_dim);
  const Index t_in = static_cast<Index>(tokens.size());
  EncodedInput out;
  out.final_states.assign(cfg.n_layers, VectorXd::Zero(h));
  out.states.resize(h, t_in);
  for (Index t = 0; t < t_in; ++t) {
    VectorXd x = p.embedding.row(tokens[static_cast<std::size_t>(t)]).transpose();
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      out.final_states[l] = gru_state(p.encoder[l], x, out.final_states[l]);
      x = out.final_states[l];
    }
    out.states.col(t) = x;
  }
  out.embedded = embed_columns(p, tokens);
  return out;
}

DecoderState initial_state(const EncodedInput& encoded) { return DecoderState{encoded.final_states}; }

VectorXd step_logits(const Parameters& p, const ModelConfig& cfg, const EncodedInput& encoded,
                     const DecoderState& state, TokenId prev, DecoderState& next) {
  if (prev < 0 || static_cast<std::size_t>(prev) >= cfg.vocab_size) throw Error("decoder token out of range");
  next.hidden.resize(cfg.n_layers);
  VectorXd x = p.embedding.row(prev).transpose();
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    next.hidden[l] = gru_state(p.decoder[l], x, state.hidden[l]);
    x = next.hidden[l];
  }
  return attend_and_project(p, cfg, encoded.states, encoded.embedded, x, nullptr);
}

ForwardCache forward_cached(const Parameters& p, const ModelConfig& cfg, std::span<const TokenId> input_ids,
                            std::span<const TokenId> shifted_targets) {
  check_ids(input_ids, cfg, "input");
  check_ids(shifted_targets, cfg, "target");
  ForwardCache c;
  c.encoder_tokens = strip_pad(input_ids);
  if (c.encoder_tokens.empty()) throw Error("input has no non-[PAD] tokens");
  const Index h = static_cast<Index>(cfg.hidden_dim);
  const std::size_t t_in = c.encoder_tokens.size();

  c.encoder.assign(cfg.n_layers, std::vector<GruStep>(t_in));
  c.encoder_states.resize(h, static_cast<Index>(t_in));
  std::vector<VectorXd> hidden(cfg.n_layers, VectorXd::Zero(h));
  for (std::size_t t = 0; t < t_in; ++t) {
    VectorXd x = p.embedding.row(c.encoder_tokens[t]).transpose();
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      gru_forward(p.encoder[l], x, hidden[l], c.encoder[l][t]);
      hidden[l] = c.encoder[l][t].h;
      x = hidden[l];
    }
    c.encoder_states.col(static_cast<Index>(t)) = x;
  }
  c.encoder_embedded = embed_columns(p, c.encoder_tokens);

  c.decoder_inputs.assign(shifted_targets.begin(), shifted_targets.end());
  c.steps.resize(c.decoder_inputs.size());
  c.logits.resize(static_cast<Index>(c.decoder_inputs.size()), static_cast<Index>(cfg.vocab_size));
  for (std::size_t r = 0; r < c.decoder_inputs.size(); ++r) {
    DecoderStepCache& step = c.steps[r];
    step.layers.resize(cfg.n_layers);
    VectorXd x = p.embedding.row(c.decoder_inputs[r]).transpose();
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      gru_forward(p.decoder[l], x, hidden[l], step.layers[l]);
      hidden[l] = step.layers[l].h;
      x = hidden[l];
    }
    c.logits.row(static_cast<Index>(r)) = attend_and_project(p, cfg, c.encoder_states, c.encoder_embedded, x, &step).transpose();
  }
  return c;
}

MatrixXd forward(const Parameters& p, const ModelConfig& cfg, std::span<const TokenId> input_ids,
                 std::span<const TokenId> shifted_targets) {
  return forward_cached(p, cfg, input_ids, shifted_targets).logits;
}

// --- losses --------------------------------------------------------------------------

VectorXd log_softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

LossBreakdown loss_lg(const MatrixXd& logits, std::span<const TokenId> target_ids, LossVariant variant) {
  if (static_cast<std::size_t>(logits.rows()) != target_ids.size())
    throw Error("loss_lg: " + std::to_string(logits.rows()) + " logit rows for " +
                std::to_string(target_ids.size()) + " targets");
  LossBreakdown b;
  for (std::size_t r = 0; r < target_ids.size(); ++r) {
    const TokenId t = target_ids[r];
    if (t == special::kPad) continue;
    if (t < 0 || t >= logits.cols()) throw Error("loss_lg: target id out of range");
    VectorXd lp = log_softmax(logits.row(static_cast<Index>(r)).transpose());
    double nll = -lp(t);
    if (variant == LossVariant::kLiteralSigned) nll += lp.sum() - lp(t);
    b.per_token_nll.push_back(nll);
    b.sequence_loss += nll;
  }
  b.weighted_loss = b.sequence_loss;
  b.weight_used = 1.0;
  return b;
}

LossBreakdown loss_weighted(LossBreakdown b, double weight, double z) {
  if (!(z > 0.0)) throw Error("loss_weighted: Z must be positive");
  if (!(weight >= 0.0 && weight <= 1.0)) throw Error("loss_weighted: weight must lie in [0,1]");
  b.weight_used = weight;
  b.weighted_loss = (weight / z) * b.sequence_loss;
  return b;
}

MatrixXd loss_lg_grad(const MatrixXd& logits, std::span<const TokenId> target_ids, LossVariant variant) {
  MatrixXd g = MatrixXd::Zero(logits.rows(), logits.cols());
  const double v = static_cast<double>(logits.cols());
  for (std::size_t r = 0; r < target_ids.size(); ++r) {
    const TokenId t = target_ids[r];
    if (t == special::kPad) continue;
    VectorXd p = log_softmax(logits.row(static_cast<Index>(r)).transpose()).array().exp().matrix();
    if (variant == LossVariant::kCrossEntropy) {
      g.row(static_cast<Index>(r)) = p.transpose();
      g(static_cast<Index>(r), t) -= 1.0;
    } else {
      // -z_t + sum_{v != t} z_v - (V - 2) * lse
      g.row(static_cast<Index>(r)) = (1.0 - (v - 2.0) * p.array()).matrix().transpose();
      g(static_cast<Index>(r), t) = -1.0 - (v - 2.0) * p(t);
    }
  }
  return g;
}

// --- backward ------------------------------------------------------------------------

void backprop(const Parameters& p, const ForwardCache& c, const MatrixXd& dlogits, double scale, Parameters& g) {
  if (scale == 0.0) return;
  const std::size_t n_layers = p.encoder.size();
  const Index h = p.combine_b.size();
  const Index t_in = c.encoder_states.cols();
  const bool attention = p.combine_w.cols() > h;
  const Index e = p.embedding.cols();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(h));

  MatrixXd d_states = MatrixXd::Zero(h, t_in);
  MatrixXd d_embedded = MatrixXd::Zero(e, t_in);
  std::vector<VectorXd> dh_next(n_layers, VectorXd::Zero(h));

  for (std::size_t ri = c.steps.size(); ri-- > 0;) {
    const DecoderStepCache& step = c.steps[ri];
    VectorXd dl = scale * dlogits.row(static_cast<Index>(ri)).transpose();
    g.output_w.noalias() += dl * step.combined.transpose();
    g.output_b += dl;
    VectorXd da = (p.output_w.transpose() * dl).cwiseProduct((1.0 - step.combined.array().square()).matrix());
    g.combine_b += da;
    const VectorXd& top = step.layers.back().h;
    VectorXd ds;
    if (attention) {
      VectorXd joint(2 * h + e);
      joint << top, step.context, step.word_context;
      g.combine_w.noalias() += da * joint.transpose();
      VectorXd djoint = p.combine_w.transpose() * da;
      ds = djoint.head(h);
      VectorXd dctx = djoint.segment(h, h);
      VectorXd dwctx = djoint.tail(e);
      VectorXd dalpha = c.encoder_states.transpose() * dctx;
      dalpha.noalias() += c.encoder_embedded.transpose() * dwctx;
      d_states.noalias() += dctx * step.alpha.transpose();
      d_embedded.noalias() += dwctx * step.alpha.transpose();
      VectorXd dscore = step.alpha.cwiseProduct((dalpha.array() - step.alpha.dot(dalpha)).matrix()) * inv_sqrt;
      ds.noalias() += c.encoder_states * dscore;
      d_states.noalias() += top * dscore.transpose();
    } else {
      g.combine_w.noalias() += da * top.transpose();
      ds = p.combine_w.transpose() * da;
    }
    VectorXd dout = std::move(ds);
    for (std::size_t l = n_layers; l-- > 0;) {
      VectorXd dh = dout + dh_next[l];
      VectorXd dh_prev;
      dout = gru_backward(p.decoder[l], step.layers[l], dh, g.decoder[l], dh_prev);
      dh_next[l] = std::move(dh_prev);
    }
    g.embedding.row(c.decoder_inputs[ri]) += dout.transpose();
  }

  // The decoder starts from the encoder's final states, so dh_next now holds
  // their gradients.
  for (Index t = t_in; t-- > 0;) {
    VectorXd dout = d_states.col(t);
    for (std::size_t l = n_layers; l-- > 0;) {
      VectorXd dh = dout + dh_next[l];
      VectorXd dh_prev;
      dout = gru_backward(p.encoder[l], c.encoder[l][static_cast<std::size_t>(t)], dh, g.encoder[l], dh_prev);
      dh_next[l] = std::move(dh_prev);
    }
    g.embedding.row(c.encoder_tokens[static_cast<std::size_t>(t)]) += (dout + d_embedded.col(t)).transpose();
  }
}

namespace {

BatchLoss run_batch(const Parameters& p, const ModelConfig& cfg, std::span<const ShapedExample> batch,
                    const LossOptions& opts, Parameters* grads) {
  if (batch.empty()) throw Error("empty batch");
  if (opts.loss_weighting && !(opts.z > 0.0)) throw Error("Z must be positive");
  BatchLoss out;
  const double m = static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    auto shifted = shift_right(ex.target_ids);
    ForwardCache cache = forward_cached(p, cfg, ex.input_ids, shifted);
    LossBreakdown b = loss_lg(cache.logits, ex.target_ids, opts.variant);
    double factor = 1.0;
    if (opts.loss_weighting) {
      b = loss_weighted(std::move(b), ex.weight, opts.z);
      factor = ex.weight / opts.z;
    }
    if (!std::isfinite(b.weighted_loss)) throw Error("non-finite loss on example " + ex.example_id);
    out.loss += b.weighted_loss / m;
    if (grads) backprop(p, cache, loss_lg_grad(cache.logits, ex.target_ids, opts.variant), factor / m, *grads);
    out.per_example.push_back(std::move(b));
  }
  return out;
}

}  // namespace

BatchLoss backward(const Parameters& p, const ModelConfig& cfg, std::span<const ShapedExample> batch,
                   const LossOptions& opts, Parameters& grads) {
  grads = zeros_like(p);
  return run_batch(p, cfg, batch, opts, &grads);
}

BatchLoss evaluate_loss(const Parameters& p, const ModelConfig& cfg, std::span<const ShapedExample> batch,
                        const LossOptions& opts) {
  return run_batch(p, cfg, batch, opts, nullptr);
}

}  // namespace genqa
