// genqa: command-line driver for the weakly supervised answer-generation
// pipeline over the synthetic QA world.
//
//   genqa gen-corpus --out corpus.jsonl --n-questions 1000 --seed 7
//   genqa build-dataset --corpus corpus.jsonl --sci --sco --out train.jsonl
//   genqa train --dataset train.jsonl --dev-corpus dev.jsonl --lw --out-dir run
//   genqa select-checkpoint --records run/records.json --criterion as2
//   genqa generate --ckpt run/ckpt-000200.bin --corpus test.jsonl --out gen.jsonl
//   genqa evaluate --generations gen.jsonl --corpus test.jsonl --report report.json
//   genqa repro --experiment ws-vs-lw
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "genqa/checkpoint.h"
#include "genqa/corpus.h"
#include "genqa/decoder.h"
#include "genqa/error.h"
#include "genqa/evaluator.h"
#include "genqa/experiments.h"
#include "genqa/manifest.h"
#include "genqa/scorer.h"
#include "genqa/shaping.h"
#include "genqa/text.h"
#include "genqa/trainer.h"

namespace fs = std::filesystem;
using namespace genqa;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kConfigEnv = "GENQA_CONFIG";

// Maps a configuration field to the flag that sets it.
std::string flag_for(const std::string& field) {
  static const std::map<std::string, std::string> aliases{
      {"n_candidates_per_q", "n-candidates"},
      {"lw_enabled", "lw"},
      {"flip_prob", "oracle-flip"},
      {"spread", "oracle-spread"},
  };
  auto it = aliases.find(field);
  std::string name = it != aliases.end() ? it->second : field;
  for (char& c : name)
    if (c == '_') c = '-';
  return "--" + name;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Collects provenance for one command and writes it next to each output.
class ManifestBuilder {
 public:
  explicit ManifestBuilder(std::string command) { m_.command = std::move(command); }

  void config(const std::string& key, const std::string& value) { m_.config[key] = value; }
  template <typename T>
  void config(const std::string& key, const T& value) {
    std::ostringstream s;
    s << value;
    m_.config[key] = s.str();
  }
  void seed(std::uint64_t s) { m_.seed = s; }
  void input(const fs::path& p) { m_.inputs[p.string()] = file_digest(p); }
  void output(const fs::path& p) { m_.outputs[p.string()] = file_digest(p); }

  // Writes "<artifact>.manifest.json" for the primary artifact.
  void write_for(const fs::path& artifact) {
    m_.wall_time_s = timer_.seconds();
    write_manifest(m_, manifest_path_for(artifact));
  }
  void write_to(const fs::path& path) {
    m_.wall_time_s = timer_.seconds();
    write_manifest(m_, path);
  }

 private:
  RunManifest m_;
  Timer timer_;
};

bool has_labels(const std::vector<QAExample>& corpus) {
  if (corpus.empty()) return false;
  for (const auto& e : corpus)
    if (!e.gold_value) return false;
  return true;
}

struct ScorerFlags {
  std::string kind = "oracle";
  double spread = 0.05;
  double flip = 0.0;
  std::uint64_t seed = 0;

  void add(CLI::App* app, bool allow_none) {
    auto* opt = app->add_option("--scorer", kind, "Teacher: oracle or overlap" + std::string(allow_none ? " or none" : ""));
    opt->capture_default_str();
    app->add_option("--oracle-spread", spread, "Oracle score half-width")->capture_default_str();
    app->add_option("--oracle-flip", flip, "Oracle label flip probability")->capture_default_str();
    app->add_option("--oracle-seed", seed, "Oracle hash seed")->capture_default_str();
    allow_none_ = allow_none;
  }

  // nullptr for "none".
  std::unique_ptr<Scorer> build(const std::vector<QAExample>& corpus) const {
    if (kind == "none" && allow_none_) return nullptr;
    if (kind == "overlap") return std::make_unique<OverlapScorer>();
    if (kind != "oracle") throw ConfigError("scorer", "expected oracle or overlap, got '" + kind + "'");
    if (!has_labels(corpus)) throw ConfigError("scorer", "the oracle teacher needs a corpus with gold labels");
    OracleScorerConfig cfg;
    cfg.spread = spread;
    cfg.flip_prob = flip;
    cfg.seed = seed;
    validate(cfg);
    return std::make_unique<OracleScorer>(std::make_shared<ExampleIndex>(corpus), cfg);
  }

  void record(ManifestBuilder& m) const {
    m.config("scorer", kind);
    if (kind == "oracle") {
      m.config("oracle_spread", spread);
      m.config("oracle_flip", flip);
      m.config("oracle_seed", seed);
    }
  }

 private:
  bool allow_none_ = false;
};

fs::path default_sibling(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

// --- gen-corpus ---------------------------------------------------------------------

struct GenCorpusArgs {
  fs::path out;
  CorpusConfig cfg;
  bool no_labels = false;
};

int run_gen_corpus(GenCorpusArgs& a) {
  ManifestBuilder m("gen-corpus");
  a.cfg.with_labels = !a.no_labels;
  validate(a.cfg);
  CorpusWriter writer(a.out);
  std::size_t n = 0;
  generate_corpus(a.cfg, [&](QAExample&& e) {
    writer.write(e);
    ++n;
  });
  m.seed(a.cfg.seed);
  m.config("n_questions", a.cfg.n_questions);
  m.config("n_candidates", a.cfg.n_candidates_per_q);
  m.config("p_correct", a.cfg.p_correct);
  m.config("p_correct_spread", a.cfg.p_correct_spread);
  m.config("k", a.cfg.k);
  m.config("with_labels", a.cfg.with_labels ? "true" : "false");
  m.output(a.out);
  m.write_for(a.out);
  std::cout << "wrote " << n << " questions to " << a.out.string() << "\n";
  return 0;
}

// --- build-dataset ---------------------------------------------------------------

struct BuildArgs {
  fs::path corpus, out, stats_out, vocab_out;
  ScorerFlags scorer;
  ShapingConfig shaping;
};

int run_build_dataset(BuildArgs& a) {
  ManifestBuilder m("build-dataset");
  validate(a.shaping);
  const auto corpus = read_corpus(a.corpus);
  const auto scorer = a.scorer.build(corpus);
  const Vocabulary vocab = corpus_vocabulary(corpus, a.shaping.levels);
  const Dataset ds = build_dataset(corpus, *scorer, a.shaping, vocab);
  if (ds.examples.empty()) {
    std::cerr << "error: all " << ds.stats.skipped << " examples skipped (fewer than k + 1 = " << a.shaping.k + 1
              << " candidates); nothing written\n";
    return kExitRuntime;
  }
  if (a.stats_out.empty()) a.stats_out = default_sibling(a.out, ".stats.json");
  if (a.vocab_out.empty()) a.vocab_out = default_sibling(a.out, ".vocab");
  write_dataset(ds.examples, a.out);
  write_stats(ds.stats, a.stats_out);
  vocab.save(a.vocab_out);

  m.input(a.corpus);
  a.scorer.record(m);
  m.seed(a.scorer.seed);
  m.config("k", a.shaping.k);
  m.config("sci", a.shaping.sci ? "true" : "false");
  m.config("sco", a.shaping.sco ? "true" : "false");
  m.config("levels", a.shaping.levels);
  m.config("max_input_tokens", a.shaping.max_input_tokens);
  m.output(a.out);
  m.output(a.stats_out);
  m.output(a.vocab_out);
  m.write_for(a.out);

  std::cout << "shaped " << ds.stats.n << " examples (" << ds.stats.skipped << " skipped), Z(mean) = " << ds.stats.z
            << "\n";
  if (a.shaping.sci || a.shaping.sco) {
    std::cout << "bucket histogram:";
    for (const auto& [token, count] : ds.stats.bucket_histogram) std::cout << " " << token << "=" << count;
    std::cout << "\n";
  }
  return 0;
}

// --- train -------------------------------------------------------------------------

struct TrainArgs {
  fs::path dataset, vocab, dev_corpus, config, out_dir;
  bool lw = false;
  ScorerFlags scorer;
  std::map<std::string, std::string> overrides;  // key -> flag value
  std::optional<std::size_t> k;
  bool sci = false, sco = false;
};

// Shaping knobs of a dataset, recovered from its contents.
ShapingConfig detect_shaping(const std::vector<ShapedExample>& data, const Vocabulary& vocab) {
  ShapingConfig s;
  s.levels = vocab.levels();
  std::size_t k = 0;
  for (const auto& e : data) {
    k = std::max(k, e.k_used);
    if (!e.target_ids.empty() && vocab.is_bucket(e.target_ids.front())) s.sco = true;
    for (TokenId id : e.input_ids)
      if (vocab.is_bucket(id)) s.sci = true;
  }
  if (k > 0) s.k = k;
  return s;
}

int run_train(TrainArgs& a, CLI::App* app) {
  ManifestBuilder m("train");
  TrainConfig tcfg;
  ModelConfig mcfg;
  mcfg.float_width = 32;
  if (a.config.empty()) {
    if (const char* env = std::getenv(kConfigEnv); env && *env) a.config = env;
  }
  if (!a.config.empty()) {
    apply_kv(read_kv_config(a.config), tcfg, mcfg);
    m.input(a.config);
  }
  std::map<std::string, std::string> flags;
  for (const auto& [key, value] : a.overrides)
    if (app->get_option("--" + std::string(flag_for(key)).substr(2))->count() > 0) flags[key] = value;
  if (a.lw) flags["lw"] = "true";
  apply_kv(flags, tcfg, mcfg);

  if (a.vocab.empty()) a.vocab = default_sibling(a.dataset, ".vocab");
  const Vocabulary vocab = Vocabulary::load(a.vocab);
  Dataset train_data;
  train_data.examples = read_dataset(a.dataset, vocab);
  if (train_data.examples.empty()) throw Error("training dataset " + a.dataset.string() + " is empty");
  const fs::path stats_path = default_sibling(a.dataset, ".stats.json");
  if (fs::exists(stats_path)) {
    train_data.stats = read_stats(stats_path);
  } else {
    double sum = 0.0, mx = 0.0;
    for (const auto& e : train_data.examples) {
      sum += e.weight;
      mx = std::max(mx, e.weight);
    }
    train_data.stats.n = train_data.examples.size();
    train_data.stats.z = sum / static_cast<double>(train_data.stats.n);
    train_data.stats.max_weight = mx;
  }

  const auto dev_corpus = read_corpus(a.dev_corpus);
  if (dev_corpus.empty()) throw Error("dev corpus " + a.dev_corpus.string() + " is empty");
  ShapingConfig shaping = detect_shaping(train_data.examples, vocab);
  if (a.k) shaping.k = *a.k;
  if (a.sci) shaping.sci = true;
  if (a.sco) shaping.sco = true;
  // Dev inputs are ranked by the same kind of teacher; the AS2 metric uses it
  // too unless --scorer none.
  ScorerFlags ranker = a.scorer;
  if (ranker.kind == "none") ranker.kind = has_labels(dev_corpus) ? "oracle" : "overlap";
  const auto dev_ranker = ranker.build(dev_corpus);
  const auto metric_scorer = a.scorer.build(dev_corpus);
  const Dataset dev_shaped = build_dataset(dev_corpus, *dev_ranker, shaping, vocab);
  if (dev_shaped.examples.empty()) throw Error("every dev question was skipped while shaping");
  const DevSet dev = make_dev_set(dev_corpus, dev_shaped);

  mcfg.vocab_size = vocab.size();
  TrainInputs in;
  in.train = &train_data;
  in.dev = &dev;
  in.vocab = &vocab;
  in.scorer = metric_scorer.get();
  in.out_dir = a.out_dir;
  Timer timer;
  std::size_t last_report = 0;
  in.on_step = [&](const StepLog& s) {
    if (s.step - last_report >= 50 || s.step == 1) {
      std::cout << "step " << s.step << "  loss " << s.loss << "  (" << static_cast<int>(timer.seconds()) << " s)\n";
      last_report = s.step;
    }
  };
  const TrainResult result = genqa::train(in, mcfg, tcfg);

  m.input(a.dataset);
  m.input(a.vocab);
  m.input(a.dev_corpus);
  m.seed(tcfg.seed);
  m.config("lr", tcfg.lr);
  m.config("optimizer", to_string(tcfg.optimizer));
  m.config("batch_size", tcfg.batch_size);
  m.config("epochs", tcfg.epochs);
  m.config("max_steps", tcfg.max_steps);
  m.config("lw", tcfg.lw_enabled ? "true" : "false");
  m.config("z_mode", to_string(tcfg.z_mode));
  m.config("z", tcfg.lw_enabled ? compute_z(train_data.stats, tcfg.z_mode) : 1.0);
  m.config("checkpoint_every", tcfg.checkpoint_every);
  m.config("grad_clip", tcfg.grad_clip ? std::to_string(*tcfg.grad_clip) : "none");
  m.config("embed_dim", mcfg.embed_dim);
  m.config("hidden_dim", mcfg.hidden_dim);
  m.config("n_layers", mcfg.n_layers);
  m.config("float_width", mcfg.float_width);
  m.config("model_seed", mcfg.seed);
  m.config("dev_sample", tcfg.dev_sample);
  a.scorer.record(m);
  for (const auto& r : result.records) m.output(r.path);
  m.output(a.out_dir / "records.json");
  m.output(a.out_dir / "train_log.jsonl");
  m.write_to(a.out_dir / "manifest.json");

  std::cout << "\n" << std::left << std::setw(10) << "step" << std::setw(12) << "dev_loss" << "avg_as2\n";
  for (const auto& r : result.records) {
    std::cout << std::left << std::setw(10) << r.step << std::setw(12) << r.dev_loss;
    if (r.avg_as2_score)
      std::cout << *r.avg_as2_score;
    else
      std::cout << "-";
    std::cout << "\n";
  }
  return 0;
}

// --- select-checkpoint -------------------------------------------------------------

int run_select(const fs::path& records_path, const std::string& criterion_text, const fs::path& out) {
  const auto criterion = parse_criterion(criterion_text);
  const auto records = read_records(records_path);
  const std::size_t i = select_checkpoint(records, criterion);
  nlohmann::ordered_json j;
  j["index"] = i;
  j["path"] = records[i].path;
  j["step"] = records[i].step;
  j["dev_loss"] = records[i].dev_loss;
  j["avg_as2_score"] = records[i].avg_as2_score ? nlohmann::ordered_json(*records[i].avg_as2_score) : nullptr;
  std::cout << j.dump(2) << "\n";
  if (!out.empty()) {
    write_file_atomic(out, j.dump(2) + "\n");
    ManifestBuilder m("select-checkpoint");
    m.input(records_path);
    m.config("criterion", criterion_text);
    m.output(out);
    m.write_for(out);
  }
  return 0;
}

// --- generate ----------------------------------------------------------------------

struct GenerateArgs {
  fs::path ckpt, corpus, out;
  std::size_t beam = 5, min_len = 6, max_len = 100, k = 5, limit = 0;
  std::string force_bucket;
  bool sci = false;
  ScorerFlags scorer;
};

int run_generate(GenerateArgs& a) {
  ManifestBuilder m("generate");
  const Checkpoint ck = load_checkpoint(a.ckpt);
  if (ck.vocab.empty()) throw Error("checkpoint " + a.ckpt.string() + " carries no vocabulary");
  const Vocabulary vocab = Vocabulary::from_tokens(ck.vocab);
  DecodeConfig dc;
  dc.beam_width = a.beam;
  dc.min_len = a.min_len;
  dc.max_len = a.max_len;
  std::optional<TokenId> forced;
  if (!a.force_bucket.empty()) {
    if (!is_bucket_string(a.force_bucket) || !vocab.contains(a.force_bucket) ||
        !vocab.is_bucket(vocab.id(a.force_bucket)))
      throw ConfigError("force_bucket", "'" + a.force_bucket + "' is not a bucket token of this model");
    forced = vocab.id(a.force_bucket);
    dc.force_first_token = forced;
  }
  validate(dc);
  ShapingConfig shaping;
  shaping.k = a.k;
  shaping.sci = a.sci;
  shaping.levels = vocab.levels();
  validate(shaping);

  auto corpus = read_corpus(a.corpus);
  if (a.limit > 0 && corpus.size() > a.limit) corpus.resize(a.limit);
  const auto scorer = a.scorer.build(corpus);
  const Dataset shaped = build_dataset(corpus, *scorer, shaping, vocab);
  if (shaped.examples.empty()) throw Error("every question was skipped while shaping");

  std::vector<GenerationRecord> records;
  records.reserve(shaped.examples.size());
  for (const auto& ex : shaped.examples) {
    const Generation g = decode(ck.params, ck.config, vocab, ex.input_ids, dc);
    records.push_back(to_record(ex.example_id, g, vocab, forced));
  }
  write_generations(records, a.out);

  m.input(a.ckpt);
  m.input(a.corpus);
  a.scorer.record(m);
  m.config("beam", a.beam);
  m.config("min_len", a.min_len);
  m.config("max_len", a.max_len);
  m.config("force_bucket", a.force_bucket.empty() ? "none" : a.force_bucket);
  m.config("k", a.k);
  m.config("sci", a.sci ? "true" : "false");
  m.output(a.out);
  m.write_for(a.out);
  std::cout << "generated " << records.size() << " answers (" << shaped.stats.skipped << " questions skipped)\n";
  return 0;
}

// --- evaluate ----------------------------------------------------------------------

struct EvaluateArgs {
  fs::path generations, corpus, report, dataset, vocab, csv;
  std::vector<std::string> metrics;  // name=path
  ScorerFlags scorer;
};

int run_evaluate(EvaluateArgs& a) {
  ManifestBuilder m("evaluate");
  const auto gens = read_generations(a.generations);
  if (gens.empty()) throw Error("generations file " + a.generations.string() + " is empty");
  const auto corpus = read_corpus(a.corpus);
  if (!has_labels(corpus)) throw Error("evaluation needs a corpus with gold values");
  const auto judgments = judge_all(gens, corpus);

  std::unordered_map<std::string, const QAExample*> by_id;
  for (const auto& e : corpus) by_id.emplace(e.id, &e);

  EvalReport r;
  r.n = gens.size();
  r.accuracy = accuracy(judgments);
  r.bucket_table = bucket_cluster_accuracy(gens, judgments);

  const auto scorer = a.scorer.build(corpus);
  std::vector<RankedCandidates> ranked;
  std::vector<QAExample> judged;
  double gold_sum = 0.0, top_sum = 0.0;
  std::size_t gold_n = 0;
  std::vector<double> per_bleu_gold, per_verdict;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const QAExample& ex = *by_id.at(gens[i].id);
    judged.push_back(ex);
    ranked.push_back(rank(ex, *scorer));
    top_sum += bleu(gens[i].text, {ex.candidates[ranked.back().top().index].text});
    std::vector<std::string> refs;
    for (const auto& c : ex.candidates)
      if (c.gold_label.value_or(false)) refs.push_back(c.text);
    if (!refs.empty()) {
      const double b = bleu(gens[i].text, refs);
      gold_sum += b;
      ++gold_n;
      per_bleu_gold.push_back(b);
      per_verdict.push_back(static_cast<double>(judgments[i].verdicts.front()));
    }
  }
  r.p_at_1 = precision_at_1(ranked, judged);
  r.bleu_vs_as2_top = top_sum / static_cast<double>(gens.size());
  if (gold_n > 0) r.bleu_vs_gold = gold_sum / static_cast<double>(gold_n);
  try {
    r.correlations["bleu_vs_gold~accuracy"] = pearson(per_bleu_gold, per_verdict);
  } catch (const Error& e) {
    std::cerr << "note: bleu_vs_gold correlation undefined (" << e.what() << ")\n";
  }
  if (auto rho = bucket_order_correlation(r.bucket_table)) r.correlations["bucket_order~accuracy(spearman)"] = *rho;

  for (const auto& spec : a.metrics) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("metric", "expected name=path, got '" + spec + "'");
    const std::string name = spec.substr(0, eq);
    const fs::path path = spec.substr(eq + 1);
    const auto scores = read_metric_scores(path);
    m.input(path);
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      auto it = scores.find(gens[i].id);
      if (it == scores.end()) continue;
      xs.push_back(it->second);
      ys.push_back(accuracy(std::span<const Judgment>(&judgments[i], 1)));
    }
    try {
      r.correlations[name + "~accuracy"] = pearson(xs, ys);
    } catch (const Error& e) {
      std::cerr << "note: correlation for " << name << " undefined (" << e.what() << ")\n";
    }
  }

  if (!a.dataset.empty()) {
    if (a.vocab.empty()) a.vocab = default_sibling(a.dataset, ".vocab");
    const Vocabulary vocab = Vocabulary::load(a.vocab);
    const auto shaped = read_dataset(a.dataset, vocab);
    r.copy_table = copy_similarity(gens, shaped, vocab);
    m.input(a.dataset);
    m.input(a.vocab);
  }

  r.config_echo["generations"] = a.generations.string();
  r.config_echo["corpus"] = a.corpus.string();
  r.config_echo["scorer"] = a.scorer.kind;
  emit_report(r, a.report);
  std::cout << format_report(r);

  m.input(a.generations);
  m.input(a.corpus);
  a.scorer.record(m);
  m.output(a.report);
  if (!a.csv.empty()) {
    emit_annotation_csv(gens, corpus, a.csv);
    m.output(a.csv);
  }
  m.write_for(a.report);
  return 0;
}

// --- repro -------------------------------------------------------------------------

int run_repro(const std::string& experiment, const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  ExperimentOptions opts;
  if (!seeds.empty()) opts.seeds = seeds;
  opts.progress = &std::cerr;
  std::string text;
  bool pass = false;
  if (experiment == "ws-vs-lw") {
    auto r = run_ws_vs_lw(opts);
    text = format_report(r);
    pass = r.pass;
  } else if (experiment == "sco-monotonic") {
    auto r = run_sco_monotonic(opts);
    text = format_report(r);
    pass = r.pass;
  } else if (experiment == "ckpt-selection") {
    auto r = run_ckpt_selection(opts.seeds.front(), opts.progress);
    text = format_report(r);
    pass = r.disagree;
  } else if (experiment == "ws-learning") {
    auto r = run_ws_learning(opts.seeds.front(), opts.progress);
    text = format_report(r);
    pass = r.pass;
  } else {
    throw ConfigError("experiment", "unknown experiment '" + experiment + "'");
  }
  std::cout << text;
  if (!out.empty()) {
    write_file_atomic(out, text);
    ManifestBuilder m("repro");
    m.config("experiment", experiment);
    std::string s;
    for (auto seed : opts.seeds) s += (s.empty() ? "" : ",") + std::to_string(seed);
    m.config("seeds", s);
    m.seed(opts.seeds.front());
    m.output(out);
    m.write_for(out);
  }
  (void)pass;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised answer generation over a synthetic QA world"};
  app.require_subcommand(1);

  // gen-corpus
  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic QA corpus");
  gen_cmd->add_option("--out", gen.out, "Output corpus file (JSONL)")->required();
  gen_cmd->add_option("--n-questions", gen.cfg.n_questions, "Number of questions")->capture_default_str();
  gen_cmd->add_option("--n-candidates", gen.cfg.n_candidates_per_q, "Candidates per question")->capture_default_str();
  gen_cmd->add_option("--p-correct", gen.cfg.p_correct, "Expected share of correct candidates")->capture_default_str();
  gen_cmd->add_option("--p-correct-spread", gen.cfg.p_correct_spread, "Per-question jitter of p-correct")
      ->capture_default_str();
  gen_cmd->add_option("--k", gen.cfg.k, "Context size the corpus must support")->capture_default_str();
  gen_cmd->add_option("--seed", gen.cfg.seed, "Random seed")->capture_default_str();
  gen_cmd->add_flag("--no-labels", gen.no_labels, "Omit gold labels and values");

  // build-dataset
  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Rank candidates and shape training pairs");
  build_cmd->add_option("--corpus", build.corpus, "Input corpus file")->required();
  build_cmd->add_option("--out", build.out, "Output dataset file (JSONL)")->required();
  build_cmd->add_option("--stats-out", build.stats_out, "Stats file (default: <out>.stats.json)");
  build_cmd->add_option("--vocab-out", build.vocab_out, "Vocabulary file (default: <out>.vocab)");
  build_cmd->add_option("--k", build.shaping.k, "Context candidates per input")->capture_default_str();
  build_cmd->add_flag("--sci", build.shaping.sci, "Prefix context candidates with bucket tokens");
  build_cmd->add_flag("--sco", build.shaping.sco, "Prefix the target with its bucket token");
  build_cmd->add_option("--levels", build.shaping.levels, "Number of confidence buckets")->capture_default_str();
  build_cmd->add_option("--max-input-tokens", build.shaping.max_input_tokens, "Input length cap")
      ->capture_default_str();
  build.scorer.add(build_cmd, false);

  // train
  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a generator on a shaped dataset");
  train_cmd->add_option("--dataset", tr.dataset, "Shaped training dataset")->required();
  train_cmd->add_option("--vocab", tr.vocab, "Vocabulary file (default: <dataset>.vocab)");
  train_cmd->add_option("--dev-corpus", tr.dev_corpus, "Dev corpus for checkpoint metrics")->required();
  train_cmd->add_option("--config", tr.config, std::string("key = value config file (default: $") + kConfigEnv + ")");
  train_cmd->add_option("--out-dir", tr.out_dir, "Directory for checkpoints, log and records")->required();
  train_cmd->add_flag("--lw", tr.lw, "Weight each example's loss by its teacher score / Z");
  for (const char* key : {"lr", "optimizer", "batch_size", "epochs", "max_steps", "z_mode", "seed", "checkpoint_every",
                          "grad_clip", "loss_variant", "dev_sample", "embed_dim", "hidden_dim", "n_layers",
                          "attention", "max_positions", "model_seed", "float_width"}) {
    train_cmd->add_option(flag_for(key), tr.overrides[key], std::string("Overrides config key ") + key);
  }
  train_cmd->add_option("--k", tr.k, "Dev context size (default: detected from the dataset)");
  train_cmd->add_flag("--sci", tr.sci, "Force SCI shaping of the dev set");
  train_cmd->add_flag("--sco", tr.sco, "Force SCO shaping of the dev set");
  tr.scorer.add(train_cmd, true);

  // select-checkpoint
  fs::path records_path, select_out;
  std::string criterion = "as2";
  auto* select_cmd = app.add_subcommand("select-checkpoint", "Pick a checkpoint from a records file");
  select_cmd->add_option("--records", records_path, "records.json written by train")->required();
  select_cmd->add_option("--criterion", criterion, "loss or as2")->capture_default_str();
  select_cmd->add_option("--out", select_out, "Also write the selection to this file");

  // generate
  GenerateArgs ga;
  auto* gen_answers = app.add_subcommand("generate", "Generate answers with a checkpoint");
  gen_answers->add_option("--ckpt", ga.ckpt, "Checkpoint file")->required();
  gen_answers->add_option("--corpus", ga.corpus, "Questions with candidates")->required();
  gen_answers->add_option("--out", ga.out, "Output generations file (JSONL)")->required();
  gen_answers->add_option("--beam", ga.beam, "Beam width (1 = greedy)")->capture_default_str();
  gen_answers->add_option("--min-len", ga.min_len, "Minimum answer length in tokens")->capture_default_str();
  gen_answers->add_option("--max-len", ga.max_len, "Maximum answer length in tokens")->capture_default_str();
  gen_answers->add_option("--force-bucket", ga.force_bucket, "Force the first token, e.g. [_MAYBE_]");
  gen_answers->add_option("--k", ga.k, "Context candidates per input")->capture_default_str();
  gen_answers->add_flag("--sci", ga.sci, "Prefix context candidates with bucket tokens");
  gen_answers->add_option("--limit", ga.limit, "Only the first N questions (0 = all)")->capture_default_str();
  ga.scorer.add(gen_answers, false);

  // evaluate
  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score generations against the oracle");
  eval_cmd->add_option("--generations", ea.generations, "Generations file")->required();
  eval_cmd->add_option("--corpus", ea.corpus, "Corpus with gold values")->required();
  eval_cmd->add_option("--report", ea.report, "Report file (JSON)")->required();
  eval_cmd->add_option("--dataset", ea.dataset, "Shaped inputs, enables the copy-similarity table");
  eval_cmd->add_option("--vocab", ea.vocab, "Vocabulary for --dataset (default: <dataset>.vocab)");
  eval_cmd->add_option("--metric", ea.metrics, "External metric scores, name=path (repeatable)");
  eval_cmd->add_option("--csv", ea.csv, "Also write an annotation CSV");
  ea.scorer.add(eval_cmd, false);

  // repro
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  fs::path repro_out;
  auto* repro_cmd = app.add_subcommand("repro", "Run a bundled desk-scale experiment");
  repro_cmd->add_option("--experiment", experiment, "ws-vs-lw, sco-monotonic, ckpt-selection or ws-learning")
      ->required();
  repro_cmd->add_option("--seeds", seeds, "Seeds (default 1 2 3)")->delimiter(',');
  repro_cmd->add_option("--out", repro_out, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_corpus(gen);
    if (build_cmd->parsed()) return run_build_dataset(build);
    if (train_cmd->parsed()) return run_train(tr, train_cmd);
    if (select_cmd->parsed()) return run_select(records_path, criterion, select_out);
    if (gen_answers->parsed()) return run_generate(ga);
    if (eval_cmd->parsed()) return run_evaluate(ea);
    if (repro_cmd->parsed()) return run_repro(experiment, seeds, repro_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << flag_for(e.field()) << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
