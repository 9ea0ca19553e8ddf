#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "genqa/error.h"
#include "genqa/random.h"
#include "genqa/trainer.h"

using namespace genqa;
namespace fs = std::filesystem;

namespace {

struct ConstantScorer final : Scorer {
  double value;
  explicit ConstantScorer(double v) : value(v) {}
  double score(std::string_view, std::string_view) const override { return value; }
  std::string name() const override { return "constant"; }
};

const Vocabulary& copy_vocab() {
  static const Vocabulary v = [] {
    std::vector<std::string> words;
    for (int i = 0; i < 6; ++i) words.push_back("w" + std::to_string(i));
    return Vocabulary::build(words);
  }();
  return v;
}

// Copy task: the target repeats the input words.
Dataset copy_dataset(std::size_t n, std::uint64_t seed, double weight) {
  Rng rng(seed);
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    ShapedExample e;
    e.example_id = "c" + std::to_string(i);
    const std::size_t len = 2 + rng.below(2);
    for (std::size_t j = 0; j < len; ++j) e.input_ids.push_back(special::kFirstWord + static_cast<TokenId>(rng.below(6)));
    e.target_ids = e.input_ids;
    e.target_ids.push_back(special::kEos);
    e.weight = weight;
    ds.examples.push_back(std::move(e));
  }
  ds.stats.n = n;
  ds.stats.z = weight;
  ds.stats.max_weight = weight;
  return ds;
}

DevSet dev_of(const Dataset& ds) {
  DevSet d;
  d.shaped = ds.examples;
  for (const auto& e : ds.examples) d.questions.push_back("q " + e.example_id);
  return d;
}

ModelConfig copy_model() {
  ModelConfig m;
  m.vocab_size = copy_vocab().size();
  m.embed_dim = 8;
  m.hidden_dim = 16;
  m.seed = 5;
  return m;
}

bool bitwise_equal(const Parameters& a, const Parameters& b) {
  std::vector<std::vector<double>> flat;
  a.for_each([&](const std::string&, const auto& t) { flat.emplace_back(t.data(), t.data() + t.size()); });
  std::size_t i = 0;
  bool same = true;
  b.for_each([&](const std::string&, const auto& t) {
    same = same && std::vector<double>(t.data(), t.data() + t.size()) == flat[i++];
  });
  return same;
}

CheckpointRecord rec(std::size_t step, double loss, std::optional<double> as2) { return {"", step, loss, as2}; }

}  // namespace

TEST_CASE("compute_z follows the mode") {
  DatasetStats s;
  s.n = 3;
  s.z = 0.4;
  s.max_weight = 0.9;
  CHECK(compute_z(s, ZMode::kMean) == 0.4);
  CHECK(compute_z(s, ZMode::kMax) == 0.9);
  CHECK(compute_z(s, ZMode::kOne) == 1.0);
  s.n = 0;
  CHECK(compute_z(s, ZMode::kMean) == 1.0);
  s.n = 2;
  s.z = 0.0;
  CHECK(compute_z(s, ZMode::kMean) == 1.0);
}

TEST_CASE("training configuration validation names the field") {
  TrainConfig c;
  c.lr = 0.0;
  try {
    validate(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "lr");
  }
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_THROWS_AS(parse_z_mode("median"), ConfigError);
  CHECK(parse_optimizer("sgd") == OptimizerKind::kSgd);
  CHECK(to_string(parse_z_mode("max")) == "max");
}

TEST_CASE("select_checkpoint follows the criterion and the tie rule") {
  const std::vector<CheckpointRecord> r{rec(100, 2.0, 0.4), rec(200, 1.5, 0.6), rec(300, 1.5, 0.6),
                                        rec(400, 1.7, 0.5)};
  CHECK(select_checkpoint(r, SelectionCriterion::kLoss) == 1);
  CHECK(select_checkpoint(r, SelectionCriterion::kAs2) == 1);
  const std::vector<CheckpointRecord> s{rec(100, 3.0, 0.1), rec(200, 1.0, 0.2), rec(300, 2.0, 0.7)};
  CHECK(select_checkpoint(s, SelectionCriterion::kLoss) == 1);
  CHECK(select_checkpoint(s, SelectionCriterion::kAs2) == 2);
  const std::vector<CheckpointRecord> none{rec(100, 1.0, std::nullopt)};
  CHECK_THROWS_AS(select_checkpoint(none, SelectionCriterion::kAs2), Error);
  CHECK(select_checkpoint(none, SelectionCriterion::kLoss) == 0);
  CHECK_THROWS_AS(select_checkpoint(std::vector<CheckpointRecord>{}, SelectionCriterion::kLoss), Error);
  CHECK(parse_criterion("loss") == SelectionCriterion::kLoss);
  CHECK_THROWS_AS(parse_criterion("bleu"), ConfigError);
}

TEST_CASE("select_checkpoint agrees with brute force on random records") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CheckpointRecord> r;
    for (std::size_t i = 0; i < 10; ++i)
      r.push_back(rec((i + 1) * 10, static_cast<double>(rng.below(4)), static_cast<double>(rng.below(4)) / 4.0));
    std::size_t best_loss = 0, best_as2 = 0;
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (r[i].dev_loss < r[best_loss].dev_loss) best_loss = i;
      if (*r[i].avg_as2_score > *r[best_as2].avg_as2_score) best_as2 = i;
    }
    CHECK(select_checkpoint(r, SelectionCriterion::kLoss) == best_loss);
    CHECK(select_checkpoint(r, SelectionCriterion::kAs2) == best_as2);
  }
}

TEST_CASE("records files round trip") {
  const std::vector<CheckpointRecord> r{{"a.bin", 10, 1.25, 0.5}, {"b.bin", 20, 1.0, std::nullopt}};
  const auto path = fs::temp_directory_path() / "genqa_records.json";
  write_records(r, path);
  CHECK(read_records(path) == r);
}

TEST_CASE("avg_as2_score with a constant teacher") {
  const auto ds = copy_dataset(6, 1, 0.5);
  const auto dev = dev_of(ds);
  const auto m = copy_model();
  const auto p = init_parameters(m);
  DecodeConfig d;
  d.beam_width = 1;
  d.min_len = 1;
  d.max_len = 5;
  const auto r = avg_as2_score(p, m, copy_vocab(), dev, ConstantScorer(0.5), d);
  CHECK(r.mean == 0.5);
  CHECK(r.scored == 6);
  CHECK(avg_as2_score(p, m, copy_vocab(), dev, ConstantScorer(0.5), d, 2).scored == 2);
  CHECK_THROWS_AS(avg_as2_score(p, m, copy_vocab(), DevSet{}, ConstantScorer(0.5), d), Error);
}

TEST_CASE("LW with every weight equal to Z reproduces WS bitwise") {
  const auto ds = copy_dataset(40, 2, 0.7);
  const auto dev = dev_of(ds);
  const auto m = copy_model();
  TrainConfig c;
  c.lr = 1e-2;
  c.batch_size = 4;
  c.epochs = 100;
  c.max_steps = 100;
  c.seed = 9;
  TrainInputs in;
  in.train = &ds;
  in.dev = &dev;
  in.vocab = &copy_vocab();
  const auto ws = train(in, m, c);
  c.lw_enabled = true;
  const auto lw = train(in, m, c);
  REQUIRE(ws.log.size() == 100);
  REQUIRE(lw.log.size() == 100);
  bool same_losses = true;
  for (std::size_t i = 0; i < 100; ++i) same_losses = same_losses && ws.log[i].loss == lw.log[i].loss;
  CHECK(same_losses);
  CHECK(bitwise_equal(ws.final_params, lw.final_params));
}

TEST_CASE("training is deterministic and learns a copy task") {
  const auto ds = copy_dataset(64, 3, 1.0);
  const auto dev = dev_of(ds);
  const auto m = copy_model();
  TrainConfig c;
  c.lr = 1e-2;
  c.batch_size = 8;
  c.epochs = 200;
  c.max_steps = 400;
  c.seed = 4;
  c.grad_clip = 5.0;
  TrainInputs in;
  in.train = &ds;
  in.dev = &dev;
  in.vocab = &copy_vocab();
  const auto a = train(in, m, c);
  const auto b = train(in, m, c);
  CHECK(bitwise_equal(a.final_params, b.final_params));
  const double initial = evaluate_loss(init_parameters(m), m, dev.shaped, {}).loss;
  const double final_loss = a.records.back().dev_loss;
  CHECK(final_loss < 0.1 * initial);
}

TEST_CASE("checkpoints, records and the step log land in the output directory") {
  const auto ds = copy_dataset(12, 4, 0.5);
  const auto dev = dev_of(ds);
  const auto m = copy_model();
  TrainConfig c;
  c.lr = 1e-2;
  c.batch_size = 4;
  c.epochs = 3;
  c.checkpoint_every = 4;
  const auto dir = fs::temp_directory_path() / "genqa_train_out";
  fs::remove_all(dir);
  TrainInputs in;
  in.train = &ds;
  in.dev = &dev;
  in.vocab = &copy_vocab();
  in.out_dir = dir;
  const auto r = train(in, m, c);
  // 9 steps: checkpoints at 4, 8 and the final step 9.
  REQUIRE(r.records.size() == 3);
  CHECK(r.records[2].step == 9);
  CHECK(fs::exists(dir / "ckpt-000004.bin"));
  CHECK(fs::exists(dir / "ckpt-000009.bin"));
  CHECK(read_records(dir / "records.json") == r.records);
  std::ifstream log(dir / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 9);
  CHECK(r.snapshots.empty());
  const auto ck = load_checkpoint(dir / "ckpt-000009.bin");
  CHECK(ck.step == 9);
  CHECK(ck.metrics.at("dev_loss") == r.records[2].dev_loss);
}

TEST_CASE("key-value configuration") {
  const auto path = fs::temp_directory_path() / "genqa_train.cfg";
  {
    std::ofstream out(path);
    out << "# comment\nlr = 0.002\nbatch_size=8\nlw = true\nz_mode = max\n\ngrad_clip = none\nhidden_dim = 32\n";
  }
  const auto kv = read_kv_config(path);
  TrainConfig t;
  ModelConfig m;
  apply_kv(kv, t, m);
  CHECK(t.lr == 0.002);
  CHECK(t.batch_size == 8);
  CHECK(t.lw_enabled);
  CHECK(t.z_mode == ZMode::kMax);
  CHECK_FALSE(t.grad_clip.has_value());
  CHECK(m.hidden_dim == 32);
  CHECK_THROWS_AS(apply_kv({{"learning_rate", "1"}}, t, m), ConfigError);
  CHECK_THROWS_AS(apply_kv({{"lr", "fast"}}, t, m), ConfigError);
}
