#include "genqa/experiments.h"

#include <chrono>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "genqa/error.h"

namespace genqa {

namespace {

// Micro model shared by every experiment: small enough for one CPU core.
ModelConfig micro_model(std::uint64_t seed) {
  ModelConfig m;
  m.embed_dim = 32;
  m.hidden_dim = 64;
  m.n_layers = 1;
  m.attention = true;
  m.seed = seed;
  m.float_width = 32;
  return m;
}

TrainConfig micro_train(std::uint64_t seed) {
  TrainConfig t;
  t.lr = 3e-3;
  t.batch_size = 16;
  t.epochs = 1000;  // bounded by max_steps
  t.max_steps = 3000;
  t.seed = seed;
  return t;
}

void note(std::ostream* progress, const std::string& line) {
  if (progress) *progress << line << std::endl;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::vector<Judgment> judge_generations(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                                        const Dataset& shaped, std::span<const QAExample> eval,
                                        const DecodeConfig& decode_cfg, std::vector<GenerationRecord>* records) {
  std::unordered_map<std::string_view, const QAExample*> by_id;
  for (const auto& e : eval) by_id.emplace(e.id, &e);
  std::vector<Judgment> judgments;
  for (const auto& ex : shaped.examples) {
    const Generation g = decode(params, model, vocab, ex.input_ids, decode_cfg);
    GenerationRecord rec = to_record(ex.example_id, g, vocab, decode_cfg.force_first_token);
    judgments.push_back(judge(rec, *by_id.at(ex.example_id)));
    if (records) records->push_back(std::move(rec));
  }
  return judgments;
}

std::vector<QAExample> make_corpus(const MicroRunSpec& spec) {
  auto corpus = generate_corpus(spec.corpus);
  if (corpus.size() <= spec.n_eval) throw Error("experiment corpus smaller than its held-out split");
  return corpus;
}

}  // namespace

MicroRunResult run_micro(const MicroRunSpec& spec, std::span<const QAExample> corpus, const Scorer& teacher,
                         const Scorer* dev_scorer) {
  const auto start = std::chrono::steady_clock::now();
  if (corpus.size() <= spec.n_eval) throw Error("run_micro: corpus smaller than the held-out split");
  const std::size_t n_train = corpus.size() - spec.n_eval;
  const auto train_part = corpus.subspan(0, n_train);
  const auto eval_part = corpus.subspan(n_train);

  const Vocabulary vocab = corpus_vocabulary(corpus, spec.shaping.levels);
  const Dataset train_data = build_dataset(train_part, teacher, spec.shaping, vocab);
  const Dataset eval_data = build_dataset(eval_part, teacher, spec.shaping, vocab);
  if (train_data.examples.empty() || eval_data.examples.empty()) throw Error("run_micro: empty split after shaping");
  const DevSet dev = make_dev_set(eval_part, eval_data);

  ModelConfig model = spec.model;
  model.vocab_size = vocab.size();
  TrainInputs in;
  in.train = &train_data;
  in.dev = &dev;
  in.vocab = &vocab;
  in.scorer = dev_scorer;

  MicroRunResult out;
  out.training = train(in, model, spec.train);
  out.judgments =
      judge_generations(out.training.final_params, model, vocab, eval_data, eval_part, spec.decode, &out.generations);
  out.accuracy = accuracy(out.judgments);
  out.bucket_table = bucket_cluster_accuracy(out.generations, out.judgments);

  std::vector<RankedCandidates> ranked;
  for (const auto& e : eval_part) ranked.push_back(rank(e, teacher));
  out.teacher_p_at_1 = precision_at_1(ranked, eval_part);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// --- experiment configurations ---------------------------------------------------

MicroRunSpec ws_learning_spec(std::uint64_t seed) {
  MicroRunSpec s;
  s.corpus.n_questions = 2000;
  s.corpus.n_candidates_per_q = 10;
  s.corpus.p_correct = 0.5;
  s.corpus.seed = seed;
  s.n_eval = 500;
  s.model = micro_model(seed);
  s.train = micro_train(seed);
  return s;
}

OracleScorerConfig ws_learning_teacher(std::uint64_t seed) {
  OracleScorerConfig t;
  t.spread = 0.0;
  t.flip_prob = 0.0;
  t.seed = seed;
  return t;
}

MicroRunSpec ws_vs_lw_spec(std::uint64_t seed, bool lw) {
  MicroRunSpec s;
  s.corpus.n_questions = 2000;
  s.corpus.n_candidates_per_q = 10;
  s.corpus.p_correct = 0.5;
  s.corpus.seed = seed;
  s.n_eval = 500;
  s.model = micro_model(seed);
  s.train = micro_train(seed);
  s.train.lw_enabled = lw;
  return s;
}

CorruptingTeacherConfig ws_vs_lw_teacher(std::uint64_t seed) {
  CorruptingTeacherConfig t;
  t.base.seed = seed;
  t.corrupt_rate = 0.3;
  return t;
}

MicroRunSpec sco_monotonic_spec(std::uint64_t seed) {
  MicroRunSpec s;
  s.corpus.n_questions = 2000;
  s.corpus.n_candidates_per_q = 10;
  s.corpus.p_correct = 0.5;
  s.corpus.p_correct_spread = 0.4;
  s.corpus.seed = seed;
  s.n_eval = 500;
  s.shaping.sco = true;
  s.model = micro_model(seed);
  s.train = micro_train(seed);
  return s;
}

OracleScorerConfig sco_monotonic_teacher(std::uint64_t seed) {
  OracleScorerConfig t;
  t.spread = 0.05;
  t.agreement_weight = 1.0;
  t.seed = seed;
  return t;
}

MicroRunSpec ckpt_selection_spec(std::uint64_t seed) {
  MicroRunSpec s = ws_learning_spec(seed);
  s.train.checkpoint_every = 300;
  s.train.dev_sample = 200;
  return s;
}

OracleScorerConfig ckpt_selection_teacher(std::uint64_t seed) {
  OracleScorerConfig t;
  t.spread = 0.1;
  t.flip_prob = 0.1;
  t.seed = seed;
  return t;
}

// --- experiments -------------------------------------------------------------------

WsLearningReport run_ws_learning(std::uint64_t seed, std::ostream* progress) {
  const MicroRunSpec spec = ws_learning_spec(seed);
  const auto corpus = make_corpus(spec);
  OracleScorer teacher(std::make_shared<ExampleIndex>(corpus), ws_learning_teacher(seed));
  const MicroRunResult r = run_micro(spec, corpus, teacher);
  WsLearningReport out;
  out.accuracy = r.accuracy;
  out.teacher_p_at_1 = r.teacher_p_at_1;
  out.n_eval = r.judgments.size();
  out.seconds = r.seconds;
  out.pass = r.accuracy >= 0.90;
  note(progress, "ws-learning seed " + std::to_string(seed) + ": accuracy " + fixed(r.accuracy));
  return out;
}

WsVsLwReport run_ws_vs_lw(const ExperimentOptions& opts) {
  WsVsLwReport out;
  out.seeds = opts.seeds;
  for (std::uint64_t seed : opts.seeds) {
    const MicroRunSpec base = ws_vs_lw_spec(seed, false);
    const auto corpus = make_corpus(base);
    CorruptingTeacher teacher(std::make_shared<ExampleIndex>(corpus), ws_vs_lw_teacher(seed));
    for (bool lw : {false, true}) {
      const MicroRunResult r = run_micro(ws_vs_lw_spec(seed, lw), corpus, teacher);
      (lw ? out.lw : out.ws).push_back(r.accuracy);
      note(opts.progress, std::string("ws-vs-lw seed ") + std::to_string(seed) + (lw ? " LW" : " WS") + ": accuracy " +
                              fixed(r.accuracy));
    }
  }
  const double n = static_cast<double>(opts.seeds.size());
  out.ws_mean = std::accumulate(out.ws.begin(), out.ws.end(), 0.0) / n;
  out.lw_mean = std::accumulate(out.lw.begin(), out.lw.end(), 0.0) / n;
  out.gain = out.lw_mean - out.ws_mean;
  out.pass = out.gain >= 0.02;
  return out;
}

ScoMonotonicReport run_sco_monotonic(const ExperimentOptions& opts) {
  ScoMonotonicReport out;
  out.seeds = opts.seeds;
  out.min_eval = std::numeric_limits<std::size_t>::max();
  double sum = 0.0;
  for (std::uint64_t seed : opts.seeds) {
    const MicroRunSpec spec = sco_monotonic_spec(seed);
    const auto corpus = make_corpus(spec);
    OracleScorer teacher(std::make_shared<ExampleIndex>(corpus), sco_monotonic_teacher(seed));
    const MicroRunResult r = run_micro(spec, corpus, teacher);
    out.tables.push_back(r.bucket_table);
    const auto rho = bucket_order_correlation(r.bucket_table);
    out.spearman.push_back(rho);
    sum += rho.value_or(0.0);
    out.min_eval = std::min(out.min_eval, r.judgments.size());
    note(opts.progress, "sco-monotonic seed " + std::to_string(seed) + ": spearman " + (rho ? fixed(*rho) : "undefined"));
  }
  out.mean_spearman = sum / static_cast<double>(opts.seeds.size());
  out.pass = out.mean_spearman > 0.0 && out.min_eval >= 500;
  return out;
}

CkptSelectionReport run_ckpt_selection(std::uint64_t seed, std::ostream* progress) {
  const MicroRunSpec spec = ckpt_selection_spec(seed);
  const auto corpus = make_corpus(spec);
  OracleScorer teacher(std::make_shared<ExampleIndex>(corpus), ckpt_selection_teacher(seed));
  const MicroRunResult r = run_micro(spec, corpus, teacher, &teacher);

  CkptSelectionReport out;
  out.records = r.training.records;
  const std::span<const QAExample> all(corpus);
  const auto eval_part = all.subspan(corpus.size() - spec.n_eval);
  const Vocabulary vocab = corpus_vocabulary(corpus, spec.shaping.levels);
  const Dataset eval_data = build_dataset(eval_part, teacher, spec.shaping, vocab);
  ModelConfig model = spec.model;
  model.vocab_size = vocab.size();
  for (const auto& params : r.training.snapshots) {
    const auto judgments = judge_generations(params, model, vocab, eval_data, eval_part, spec.decode, nullptr);
    out.accuracy.push_back(accuracy(judgments));
  }
  out.by_loss = select_checkpoint(out.records, SelectionCriterion::kLoss);
  out.by_as2 = select_checkpoint(out.records, SelectionCriterion::kAs2);
  out.disagree = out.by_loss != out.by_as2;
  note(progress, "ckpt-selection seed " + std::to_string(seed) + ": " + std::to_string(out.records.size()) +
                     " checkpoints");
  return out;
}

// --- reports -----------------------------------------------------------------------

std::string format_report(const WsLearningReport& r) {
  std::ostringstream s;
  s << "experiment: ws-learning\n";
  s << "held-out questions   " << r.n_eval << "\n";
  s << "teacher P@1          " << fixed(r.teacher_p_at_1) << "\n";
  s << "WS accuracy          " << fixed(r.accuracy) << "\n";
  s << "wall time            " << fixed(r.seconds, 1) << " s\n";
  s << "verdict: " << (r.pass ? "PASS" : "FAIL") << " (accuracy >= 0.90)\n";
  return s.str();
}

std::string format_report(const WsVsLwReport& r) {
  std::ostringstream s;
  s << "experiment: ws-vs-lw\n";
  s << std::left << std::setw(8) << "seed" << std::setw(10) << "WS" << "LW\n";
  for (std::size_t i = 0; i < r.seeds.size(); ++i)
    s << std::left << std::setw(8) << r.seeds[i] << std::setw(10) << fixed(r.ws[i]) << fixed(r.lw[i]) << "\n";
  s << std::left << std::setw(8) << "mean" << std::setw(10) << fixed(r.ws_mean) << fixed(r.lw_mean) << "\n";
  s << "WS accuracy " << fixed(r.ws_mean) << ", LW accuracy " << fixed(r.lw_mean) << ", gain "
    << fixed(100.0 * r.gain, 2) << " points\n";
  s << "verdict: " << (r.pass ? "PASS" : "FAIL") << " (gain >= 2.00 points)\n";
  return s.str();
}

std::string format_report(const ScoMonotonicReport& r) {
  std::ostringstream s;
  s << "experiment: sco-monotonic\n";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    s << "seed " << r.seeds[i] << "\n";
    for (int b = 5; b >= 1; --b) {
      const std::string token = bucket_token(b, 5);
      auto it = r.tables[i].find(token);
      s << "  " << std::left << std::setw(14) << token;
      if (it == r.tables[i].end())
        s << "count 0\n";
      else
        s << "count " << std::setw(6) << it->second.count << "accuracy " << fixed(it->second.accuracy) << "\n";
    }
    if (auto it = r.tables[i].find(std::string(kNoBucket)); it != r.tables[i].end())
      s << "  " << std::left << std::setw(14) << kNoBucket << "count " << std::setw(6) << it->second.count
        << "accuracy " << fixed(it->second.accuracy) << "\n";
    s << "  spearman " << (r.spearman[i] ? fixed(*r.spearman[i]) : std::string("undefined")) << "\n";
  }
  s << "mean spearman " << fixed(r.mean_spearman) << "\n";
  s << "verdict: " << (r.pass ? "PASS" : "FAIL") << " (mean spearman > 0 over >= 500 questions per seed)\n";
  return s.str();
}

std::string format_report(const CkptSelectionReport& r) {
  std::ostringstream s;
  s << "experiment: ckpt-selection\n";
  s << std::left << std::setw(8) << "step" << std::setw(12) << "dev_loss" << std::setw(10) << "avg_as2"
    << "accuracy\n";
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    s << std::left << std::setw(8) << rec.step << std::setw(12) << fixed(rec.dev_loss) << std::setw(10)
      << (rec.avg_as2_score ? fixed(*rec.avg_as2_score) : std::string("-"))
      << (i < r.accuracy.size() ? fixed(r.accuracy[i]) : std::string("-"));
    if (i == r.by_loss) s << "  <- min dev_loss";
    if (i == r.by_as2) s << "  <- max avg_as2";
    s << "\n";
  }
  s << "selected by loss: step " << r.records[r.by_loss].step << ", by as2: step " << r.records[r.by_as2].step << "\n";
  s << "verdict: criteria " << (r.disagree ? "disagree" : "agree") << "\n";
  return s.str();
}

}  // namespace genqa
