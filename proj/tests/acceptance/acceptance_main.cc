// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "../support/toy_search.h"
#include "genqa/corpus.h"
#include "genqa/decoder.h"
#include "genqa/evaluator.h"
#include "genqa/experiments.h"
#include "genqa/model.h"
#include "genqa/random.h"
#include "genqa/scorer.h"
#include "genqa/shaping.h"
#include "genqa/trainer.h"

using namespace genqa;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GENQA_TEST_DATA;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int number;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// --- 1 ---------------------------------------------------------------------------

Outcome bucketing() {
  std::size_t mismatches = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double s = i / 1000.0;
    int expect = -1;
    for (int b = 1; b <= 5; ++b) {
      const double lo = (b - 1) / 5.0, hi = b / 5.0;
      if ((s >= lo && s < hi) || (b == 5 && s == 1.0)) expect = b;
    }
    if (bucket(s, 5).index != expect) ++mismatches;
  }
  const std::vector<std::pair<double, std::string>> edges{{0.0, "[_NO_]"},       {0.2, "[_DOUBT_]"},
                                                          {0.4, "[_MAYBE_]"},    {0.6, "[_PROBABLY_]"},
                                                          {0.8, "[_YES_]"},      {1.0, "[_YES_]"}};
  std::size_t edge_errors = 0;
  for (const auto& [s, tok] : edges) edge_errors += bucket(s, 5).token != tok;
  return {mismatches == 0 && edge_errors == 0,
          std::to_string(mismatches) + " scan mismatches, " + std::to_string(edge_errors) + " boundary errors"};
}

// --- 2 ---------------------------------------------------------------------------

Outcome shaping_goldens() {
  const auto corpus = read_corpus(kData / "fixture.jsonl");
  const auto scores = read_scores(kData / "fixture_scores.jsonl");
  const auto vocab = corpus_vocabulary(corpus);
  std::string failed;
  const std::vector<std::tuple<std::string, bool, bool>> variants{
      {"ws", false, false}, {"sci", true, false}, {"sco", false, true}, {"sci_sco", true, true}};
  for (const auto& [name, sci, sco] : variants) {
    ShapingConfig cfg;
    cfg.sci = sci;
    cfg.sco = sco;
    std::vector<ShapedExample> shaped;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      shaped.push_back(shape(corpus[i], rank_scores(corpus[i].id, scores[i].scores), cfg, vocab));
    const auto out = fs::temp_directory_path() / ("genqa_acceptance_" + name + ".jsonl");
    write_dataset(shaped, out);
    if (slurp(out) != slurp(kData / ("golden_" + name + ".jsonl"))) failed += " " + name;
  }
  return {failed.empty() && corpus.size() == 20,
          failed.empty() ? "4/4 variants byte-identical on 20 examples" : "differs:" + failed};
}

// --- 3 ---------------------------------------------------------------------------

double* coordinate(Parameters& p, std::size_t i) {
  double* out = nullptr;
  std::size_t offset = 0;
  p.for_each([&](const std::string&, auto& t) {
    const auto n = static_cast<std::size_t>(t.size());
    if (!out && i < offset + n) out = t.data() + (i - offset);
    offset += n;
  });
  return out;
}

Outcome gradient_check() {
  ModelConfig m;
  m.vocab_size = 16;
  m.embed_dim = 8;
  m.hidden_dim = 12;
  m.seed = 99;
  const Parameters p0 = init_parameters(m);
  const std::size_t n_params = p0.parameter_count();
  auto ex = [](std::vector<TokenId> in, std::vector<TokenId> out, double w) {
    ShapedExample e;
    e.example_id = "g";
    e.input_ids = std::move(in);
    e.target_ids = std::move(out);
    e.weight = w;
    return e;
  };
  const std::vector<ShapedExample> batch{ex({10, 3, 11, 12, 3, 13, 14}, {12, 13, special::kEos}, 0.8),
                                         ex({15, 3, 7, 10, 11}, {7, 10, 11, special::kEos}, 0.35)};
  double worst = 0.0;
  for (bool weighted : {false, true}) {
    LossOptions opts;
    opts.loss_weighting = weighted;
    opts.z = 0.55;
    Parameters grads;
    backward(p0, m, batch, opts, grads);
    Parameters p = p0;
    Rng rng(weighted ? 2 : 1);
    const double h = 1e-5;
    for (int k = 0; k < 50; ++k) {
      const std::size_t i = rng.below(n_params);
      double* x = coordinate(p, i);
      const double saved = *x;
      *x = saved + h;
      const double up = evaluate_loss(p, m, batch, opts).loss;
      *x = saved - h;
      const double down = evaluate_loss(p, m, batch, opts).loss;
      *x = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = *coordinate(grads, i);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return {n_params <= 5000 && worst < 1e-4,
          std::to_string(n_params) + " parameters, max relative error " + fmt(worst * 1e6, 3) + "e-6"};
}

// --- 4 ---------------------------------------------------------------------------

Outcome lw_reduction() {
  const auto vocab = Vocabulary::build(std::vector<std::string>{"a", "b", "c", "d", "e", "f"});
  Rng rng(4);
  Dataset ds;
  const double w = 0.7;
  for (int i = 0; i < 48; ++i) {
    ShapedExample e;
    e.example_id = "x" + std::to_string(i);
    for (int j = 0; j < 4; ++j) e.input_ids.push_back(special::kFirstWord + static_cast<TokenId>(rng.below(6)));
    e.target_ids = {e.input_ids[1], e.input_ids[2], special::kEos};
    e.weight = w;
    ds.examples.push_back(e);
  }
  ds.stats.n = ds.examples.size();
  ds.stats.z = w;
  ds.stats.max_weight = w;
  DevSet dev;
  dev.shaped = ds.examples;
  dev.questions.assign(ds.examples.size(), "q");
  ModelConfig m;
  m.vocab_size = vocab.size();
  m.embed_dim = 8;
  m.hidden_dim = 16;
  m.seed = 3;
  TrainConfig c;
  c.lr = 5e-3;
  c.batch_size = 4;
  c.epochs = 100;
  c.max_steps = 100;
  c.seed = 8;
  TrainInputs in;
  in.train = &ds;
  in.dev = &dev;
  in.vocab = &vocab;
  const auto ws = train(in, m, c);
  c.lw_enabled = true;
  const auto lw = train(in, m, c);
  std::size_t loss_diffs = 0;
  for (std::size_t i = 0; i < std::min(ws.log.size(), lw.log.size()); ++i) loss_diffs += ws.log[i].loss != lw.log[i].loss;
  std::vector<double> a, b;
  ws.final_params.for_each([&](const std::string&, const auto& t) { a.insert(a.end(), t.data(), t.data() + t.size()); });
  lw.final_params.for_each([&](const std::string&, const auto& t) { b.insert(b.end(), t.data(), t.data() + t.size()); });
  const bool same = a == b && loss_diffs == 0 && ws.log.size() == 100 && lw.log.size() == 100;
  return {same, std::to_string(ws.log.size()) + " steps, " + std::to_string(loss_diffs) +
                    " differing step losses, parameters " + (a == b ? "identical" : "differ")};
}

// --- 5 ---------------------------------------------------------------------------

Outcome beam_oracle() {
  using namespace genqa::testing;
  const auto m = toy_model();
  const auto& p = trained_toy_parameters();
  DecodeConfig cfg;
  cfg.min_len = 1;
  cfg.max_len = 3;
  cfg.allow_leading_bucket = false;
  Rng rng(55);
  std::size_t beam_misses = 0, greedy_misses = 0;
  cfg.beam_width = 3;
  for (int i = 0; i < 20; ++i) {
    const auto in = random_input(rng);
    const auto best = exhaustive_best(p, m, in, cfg.min_len, cfg.max_len);
    if (beam(p, m, toy_vocab(), in, cfg).best.token_ids != best.tokens) ++beam_misses;
  }
  cfg.beam_width = 1;
  for (int i = 0; i < 100; ++i) {
    const auto in = random_input(rng);
    if (beam(p, m, toy_vocab(), in, cfg).best.token_ids != greedy(p, m, toy_vocab(), in, cfg).token_ids)
      ++greedy_misses;
  }
  return {beam_misses == 0 && greedy_misses == 0,
          "beam(3) vs exhaustive: " + std::to_string(20 - beam_misses) + "/20 agree; beam(1) vs greedy: " +
              std::to_string(100 - greedy_misses) + "/100 agree"};
}

// --- 6 ---------------------------------------------------------------------------

Outcome forced_decoding() {
  using namespace genqa::testing;
  const auto m = toy_model(77);
  const auto p = init_parameters(m);
  const auto& v = toy_vocab();
  DecodeConfig cfg;
  cfg.beam_width = 3;
  cfg.min_len = 2;
  cfg.max_len = 5;
  Rng rng(66);
  std::size_t runs = 0, bad_first = 0, bad_len = 0;
  for (int i = 0; i < 50; ++i) {
    const auto in = random_input(rng);
    for (TokenId b : v.bucket_ids_descending()) {
      cfg.force_first_token = b;
      const auto g = forced_decode(p, m, v, in, cfg);
      ++runs;
      if (g.token_ids.empty() || g.token_ids.front() != b) ++bad_first;
      const auto n = strip_bucket(g.token_ids, v).content.size();
      if (n < cfg.min_len || n > cfg.max_len) ++bad_len;
    }
  }
  return {bad_first == 0 && bad_len == 0 && runs == 250,
          std::to_string(runs) + " forced decodes, " + std::to_string(bad_first) + " wrong first tokens, " +
              std::to_string(bad_len) + " length violations"};
}

// --- 7 ---------------------------------------------------------------------------

Outcome checkpoint_selection() {
  // Ties on both criteria: the earliest step must win.
  const std::vector<CheckpointRecord> records{
      {"c1", 100, 2.10, 0.41}, {"c2", 200, 1.80, 0.47}, {"c3", 300, 1.55, 0.52}, {"c4", 400, 1.42, 0.61},
      {"c5", 500, 1.38, 0.58}, {"c6", 600, 1.38, 0.61}, {"c7", 700, 1.40, 0.55}, {"c8", 800, 1.45, 0.61},
      {"c9", 900, 1.51, 0.50}, {"c10", 1000, 1.60, 0.49}};
  const auto path = fs::temp_directory_path() / "genqa_acceptance_records.json";
  write_records(records, path);
  const auto loaded = read_records(path);
  std::size_t arg_min = 0, arg_max = 0;
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    if (loaded[i].dev_loss < loaded[arg_min].dev_loss) arg_min = i;
    if (*loaded[i].avg_as2_score > *loaded[arg_max].avg_as2_score) arg_max = i;
  }
  const auto by_loss = select_checkpoint(loaded, SelectionCriterion::kLoss);
  const auto by_as2 = select_checkpoint(loaded, SelectionCriterion::kAs2);
  return {by_loss == arg_min && by_as2 == arg_max && arg_min == 4 && arg_max == 3,
          "loss picks step " + std::to_string(loaded[by_loss].step) + ", as2 picks step " +
              std::to_string(loaded[by_as2].step)};
}

// --- 8-10 ------------------------------------------------------------------------

Outcome ws_learning() {
  const auto r = run_ws_learning(1, &std::cerr);
  return {r.pass && r.n_eval >= 500, "oracle accuracy " + fmt(r.accuracy, 3) + " on " + std::to_string(r.n_eval) +
                                         " held-out questions (teacher P@1 " + fmt(r.teacher_p_at_1, 3) + ")"};
}

Outcome lw_benefit() {
  ExperimentOptions opts;
  opts.progress = &std::cerr;
  const auto r = run_ws_vs_lw(opts);
  std::string per_seed;
  for (std::size_t i = 0; i < r.seeds.size(); ++i)
    per_seed += (i ? ", " : "") + std::string("seed ") + std::to_string(r.seeds[i]) + " " + fmt(r.ws[i], 3) + "->" +
                fmt(r.lw[i], 3);
  return {r.pass && r.seeds.size() == 3,
          "WS " + fmt(r.ws_mean, 3) + ", LW " + fmt(r.lw_mean, 3) + ", gain " + fmt(r.gain, 3) + " (" + per_seed + ")"};
}

Outcome sco_monotonic() {
  ExperimentOptions opts;
  opts.progress = &std::cerr;
  const auto r = run_sco_monotonic(opts);
  std::string per_seed;
  for (std::size_t i = 0; i < r.spearman.size(); ++i)
    per_seed += (i ? ", " : "") + (r.spearman[i] ? fmt(*r.spearman[i], 3) : std::string("undefined"));
  return {r.pass && r.seeds.size() == 3 && r.min_eval >= 500,
          "mean Spearman " + fmt(r.mean_spearman, 3) + " over " + std::to_string(r.seeds.size()) + " seeds (" +
              per_seed + "), >= " + std::to_string(r.min_eval) + " eval questions each"};
}

// --- 11 --------------------------------------------------------------------------

Outcome metric_identities() {
  Rng rng(11);
  const std::vector<std::string> words{"the", "river", "runs", "north", "of", "old", "town", "and", "is", "wide"};
  std::size_t bleu_fail = 0;
  for (int i = 0; i < 50; ++i) {
    std::string s;
    const std::size_t n = 1 + rng.below(15);
    for (std::size_t j = 0; j < n; ++j) s += (j ? " " : "") + words[rng.below(words.size())];
    if (std::abs(bleu(s, {s}) - 100.0) > 1e-9) ++bleu_fail;
  }
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x, y;
    const double a = (static_cast<double>(rng.below(2000)) - 1000.0) / 37.0;
    const double b = (static_cast<double>(rng.below(2000)) - 1000.0) / 13.0;
    if (a == 0.0) continue;
    for (int k = 0; k < 30; ++k) {
      x.push_back(static_cast<double>(rng.below(100000)) / 977.0);
      y.push_back(a * x.back() + b);
    }
    const double r = pearson(x, y);
    worst = std::max(worst, std::abs(std::abs(r) - 1.0) + (std::signbit(r) != std::signbit(a) ? 1.0 : 0.0));
  }
  return {bleu_fail == 0 && worst <= 1e-9,
          std::to_string(50 - bleu_fail) + "/50 self-BLEU = 100, max |pearson| deviation " + fmt(worst * 1e12, 3) +
              "e-12"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "bucketing", 1, bucketing},
      {2, "shaping golden files", 1, shaping_goldens},
      {3, "gradient check", 30, gradient_check},
      {4, "LW reduces to WS", 60, lw_reduction},
      {5, "beam search oracle", 10, beam_oracle},
      {6, "forced decoding", 10, forced_decoding},
      {7, "checkpoint selection", 1, checkpoint_selection},
      {8, "end-to-end WS learning", 600, ws_learning},
      {9, "directional LW benefit", 1800, lw_benefit},
      {10, "SCO confidence monotonicity", 1800, sco_monotonic},
      {11, "metric identities", 1, metric_identities},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.number << "] " << c.name << ": " << o.detail << " ("
              << fmt(secs, 2) << " s" << (in_time ? "" : ", over the " + fmt(c.budget_s, 0) + " s budget") << ")"
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
