#include "genqa/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "genqa/error.h"
#include "genqa/random.h"
#include "genqa/text.h"

namespace genqa {

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (cfg.batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
  if (!(cfg.eps > 0.0)) throw ConfigError("eps", "must be positive");
  if (cfg.grad_clip && !(*cfg.grad_clip > 0.0)) throw ConfigError("grad_clip", "must be positive");
}

std::string to_string(ZMode mode) {
  switch (mode) {
    case ZMode::kMean: return "mean";
    case ZMode::kMax: return "max";
    case ZMode::kOne: return "one";
  }
  return "mean";
}

ZMode parse_z_mode(const std::string& text) {
  if (text == "mean") return ZMode::kMean;
  if (text == "max") return ZMode::kMax;
  if (text == "one") return ZMode::kOne;
  throw ConfigError("z_mode", "expected mean, max or one, got '" + text + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adam") return OptimizerKind::kAdam;
  throw ConfigError("optimizer", "expected sgd or adam, got '" + text + "'");
}

double compute_z(const DatasetStats& stats, ZMode mode) {
  if (stats.n == 0) return 1.0;
  double z = 1.0;
  switch (mode) {
    case ZMode::kMean: z = stats.z; break;
    case ZMode::kMax: z = stats.max_weight; break;
    case ZMode::kOne: z = 1.0; break;
  }
  return z > 0.0 ? z : 1.0;
}

// --- optimizer -----------------------------------------------------------------------

double gradient_norm(const Parameters& grads) {
  double sq = 0.0;
  grads.for_each([&sq](const std::string&, const auto& t) { sq += t.squaredNorm(); });
  return std::sqrt(sq);
}

Optimizer::Optimizer(const TrainConfig& cfg, const Parameters& like) : cfg_(cfg) {
  validate(cfg_);
  if (cfg_.optimizer == OptimizerKind::kAdam) {
    m_ = zeros_like(like);
    v_ = zeros_like(like);
  }
}

void Optimizer::step(Parameters& params, Parameters& grads) {
  ++t_;
  if (cfg_.grad_clip) {
    const double norm = gradient_norm(grads);
    if (norm > *cfg_.grad_clip) {
      const double s = *cfg_.grad_clip / norm;
      grads.for_each([s](const std::string&, auto& t) { t *= s; });
    }
  }
  // Walk the four structures in lockstep through flat pointer lists.
  std::vector<double*> p_ptr, g_ptr, m_ptr, v_ptr;
  std::vector<Eigen::Index> sizes;
  params.for_each([&](const std::string&, auto& t) {
    p_ptr.push_back(t.data());
    sizes.push_back(t.size());
  });
  grads.for_each([&](const std::string&, auto& t) { g_ptr.push_back(t.data()); });
  if (cfg_.optimizer == OptimizerKind::kSgd) {
    for (std::size_t k = 0; k < p_ptr.size(); ++k)
      for (Eigen::Index i = 0; i < sizes[k]; ++i) p_ptr[k][i] -= cfg_.lr * g_ptr[k][i];
    return;
  }
  m_.for_each([&](const std::string&, auto& t) { m_ptr.push_back(t.data()); });
  v_.for_each([&](const std::string&, auto& t) { v_ptr.push_back(t.data()); });
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < p_ptr.size(); ++k)
    for (Eigen::Index i = 0; i < sizes[k]; ++i) {
      const double g = g_ptr[k][i];
      double& m = m_ptr[k][i];
      double& v = v_ptr[k][i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      p_ptr[k][i] -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
    }
}

// --- dev metrics ---------------------------------------------------------------------

DevSet make_dev_set(std::span<const QAExample> corpus, const Dataset& shaped) {
  std::unordered_map<std::string_view, const QAExample*> by_id;
  for (const auto& e : corpus) by_id.emplace(e.id, &e);
  DevSet dev;
  for (const auto& s : shaped.examples) {
    auto it = by_id.find(s.example_id);
    if (it == by_id.end()) throw Error("dev set: shaped example " + s.example_id + " missing from corpus");
    dev.shaped.push_back(s);
    dev.questions.push_back(it->second->question);
  }
  return dev;
}

As2ScoreResult avg_as2_score(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                             const DevSet& dev, const Scorer& scorer, const DecodeConfig& decode_cfg,
                             std::size_t sample) {
  if (dev.shaped.empty()) throw Error("avg_as2_score: empty dev set");
  if (dev.questions.size() != dev.shaped.size()) throw Error("avg_as2_score: dev set is misaligned");
  const std::size_t n = sample == 0 ? dev.shaped.size() : std::min(sample, dev.shaped.size());
  As2ScoreResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      Generation g = decode(params, model, vocab, dev.shaped[i].input_ids, decode_cfg);
      sum += scorer.score(dev.questions[i], g.text);
      ++r.scored;
    } catch (const Error&) {
      ++r.skipped;
    }
  }
  if (r.scored == 0) throw Error("avg_as2_score: every dev question failed to decode");
  r.mean = sum / static_cast<double>(r.scored);
  return r;
}

SelectionCriterion parse_criterion(const std::string& text) {
  if (text == "loss") return SelectionCriterion::kLoss;
  if (text == "as2") return SelectionCriterion::kAs2;
  throw ConfigError("criterion", "expected loss or as2, got '" + text + "'");
}

std::size_t select_checkpoint(std::span<const CheckpointRecord> records, SelectionCriterion criterion) {
  if (records.empty()) throw Error("select_checkpoint: no records");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    double value;
    if (criterion == SelectionCriterion::kAs2) {
      if (!r.avg_as2_score) continue;
      value = -*r.avg_as2_score;
    } else {
      value = r.dev_loss;
    }
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = records[*best];
    const double bv = criterion == SelectionCriterion::kAs2 ? -*b.avg_as2_score : b.dev_loss;
    if (value < bv || (value == bv && r.step < b.step)) best = i;
  }
  if (!best) throw Error("select_checkpoint: criterion as2 requested but no record carries an AS2 score");
  return *best;
}

// --- training loop ---------------------------------------------------------------------

TrainResult train(const TrainInputs& in, const ModelConfig& model_cfg, const TrainConfig& cfg) {
  validate(cfg);
  validate(model_cfg);
  if (!in.train || in.train->examples.empty()) throw Error("train: empty training dataset");
  if (!in.dev || in.dev->shaped.empty()) throw Error("train: empty dev set");
  if (!in.vocab) throw Error("train: vocabulary required");
  if (in.vocab->size() != model_cfg.vocab_size) throw Error("train: vocab_size does not match the vocabulary");

  const auto& data = in.train->examples;
  const double z = cfg.lw_enabled ? compute_z(in.train->stats, cfg.z_mode) : 1.0;
  const LossOptions opts{cfg.lw_enabled, z, cfg.loss_variant};

  std::ofstream log_out;
  if (in.out_dir) {
    std::filesystem::create_directories(*in.out_dir);
    log_out.open(*in.out_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
    if (!log_out) throw Error("cannot open training log in " + in.out_dir->string());
  }

  TrainResult result;
  result.final_params = init_parameters(model_cfg);
  Parameters& params = result.final_params;
  Optimizer opt(cfg, params);
  Parameters grads;

  auto emit = [&](std::size_t step) {
    CheckpointRecord rec;
    rec.step = step;
    rec.dev_loss = evaluate_loss(params, model_cfg, in.dev->shaped, LossOptions{}).loss;
    if (in.scorer)
      rec.avg_as2_score =
          avg_as2_score(params, model_cfg, *in.vocab, *in.dev, *in.scorer, in.checkpoint_decode, cfg.dev_sample).mean;
    if (in.out_dir) {
      std::ostringstream name;
      name << "ckpt-" << std::setw(6) << std::setfill('0') << step << ".bin";
      const auto path = *in.out_dir / name.str();
      Checkpoint ck{model_cfg, params, step, {{"dev_loss", rec.dev_loss}}, in.vocab->tokens()};
      if (rec.avg_as2_score) ck.metrics["avg_as2_score"] = *rec.avg_as2_score;
      save_checkpoint(ck, path);
      rec.path = path.string();
    } else {
      result.snapshots.push_back(params);
    }
    result.records.push_back(std::move(rec));
  };

  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  std::size_t last_emitted = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(hash_parts(cfg.seed, {"epoch", std::to_string(epoch)}));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size() && !done; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<ShapedExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      BatchLoss bl;
      try {
        bl = backward(params, model_cfg, batch, opts, grads);
      } catch (const Error& e) {
        std::string ids;
        for (const auto& b : batch) ids += (ids.empty() ? "" : ",") + b.example_id;
        throw Error("step " + std::to_string(step + 1) + " (batch " + ids + "): " + e.what());
      }
      opt.step(params, grads);
      if (model_cfg.float_width == 32) round_to_float(params);
      ++step;
      StepLog entry{step, bl.loss, cfg.lr};
      result.log.push_back(entry);
      if (log_out.is_open()) append_step_log(log_out, entry);
      if (in.on_step) in.on_step(entry);
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
        emit(step);
        last_emitted = step;
      }
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }
  }
  if (last_emitted != step || result.records.empty()) emit(step);
  if (in.out_dir) write_records(result.records, *in.out_dir / "records.json");
  return result;
}

// --- files -------------------------------------------------------------------------------

void write_records(std::span<const CheckpointRecord> records, const std::filesystem::path& path) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["step"] = r.step;
    j["dev_loss"] = r.dev_loss;
    if (r.avg_as2_score)
      j["avg_as2_score"] = *r.avg_as2_score;
    else
      j["avg_as2_score"] = nullptr;
    arr.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["checkpoints"] = arr;
  write_file_atomic(path, doc.dump(2) + "\n");
}

std::vector<CheckpointRecord> read_records(const std::filesystem::path& path) {
  try {
    auto doc = nlohmann::json::parse(read_file(path));
    std::vector<CheckpointRecord> out;
    for (const auto& j : doc.at("checkpoints")) {
      CheckpointRecord r;
      r.path = j.value("path", "");
      r.step = j.at("step").get<std::size_t>();
      r.dev_loss = j.at("dev_loss").get<double>();
      if (j.contains("avg_as2_score") && !j.at("avg_as2_score").is_null())
        r.avg_as2_score = j.at("avg_as2_score").get<double>();
      out.push_back(std::move(r));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed records file " + path.string() + ": " + e.what());
  }
}

void append_step_log(std::ostream& out, const StepLog& entry) {
  nlohmann::ordered_json j;
  j["step"] = entry.step;
  j["loss"] = entry.loss;
  j["lr"] = entry.lr;
  out << j.dump() << '\n';
}

std::map<std::string, std::string> read_kv_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config", path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

}  // namespace

void apply_kv(const std::map<std::string, std::string>& kv, TrainConfig& t, ModelConfig& m) {
  for (const auto& [key, v] : kv) {
    if (key == "lr") t.lr = to_double(key, v);
    else if (key == "optimizer") t.optimizer = parse_optimizer(v);
    else if (key == "beta1") t.beta1 = to_double(key, v);
    else if (key == "beta2") t.beta2 = to_double(key, v);
    else if (key == "eps") t.eps = to_double(key, v);
    else if (key == "batch_size") t.batch_size = to_uint(key, v);
    else if (key == "epochs") t.epochs = to_uint(key, v);
    else if (key == "max_steps") t.max_steps = to_uint(key, v);
    else if (key == "lw" || key == "lw_enabled") t.lw_enabled = to_bool(key, v);
    else if (key == "z_mode") t.z_mode = parse_z_mode(v);
    else if (key == "seed") t.seed = to_uint(key, v);
    else if (key == "checkpoint_every") t.checkpoint_every = to_uint(key, v);
    else if (key == "grad_clip") {
      if (v == "none") t.grad_clip.reset();
      else t.grad_clip = to_double(key, v);
    } else if (key == "loss_variant") {
      if (v == "ce") t.loss_variant = LossVariant::kCrossEntropy;
      else if (v == "literal") t.loss_variant = LossVariant::kLiteralSigned;
      else throw ConfigError(key, "expected ce or literal");
    } else if (key == "dev_sample") t.dev_sample = to_uint(key, v);
    else if (key == "embed_dim") m.embed_dim = to_uint(key, v);
    else if (key == "hidden_dim") m.hidden_dim = to_uint(key, v);
    else if (key == "n_layers") m.n_layers = to_uint(key, v);
    else if (key == "attention") m.attention = to_bool(key, v);
    else if (key == "max_positions") m.max_positions = to_uint(key, v);
    else if (key == "model_seed") m.seed = to_uint(key, v);
    else if (key == "float_width") m.float_width = static_cast<int>(to_uint(key, v));
    else throw ConfigError(key, "unknown configuration key");
  }
  validate(t);
}

}  // namespace genqa
