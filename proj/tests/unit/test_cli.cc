#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "genqa/checkpoint.h"
#include "genqa/decoder.h"
#include "genqa/manifest.h"
#include "genqa/trainer.h"

namespace fs = std::filesystem;

namespace {

const fs::path kCli = GENQA_CLI;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "genqa_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli.string() + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli: usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("gen-corpus") == 2);
  CHECK(run("no-such-command") == 2);
  const auto dir = scratch("usage");
  CHECK(run("gen-corpus --out " + q(dir / "c.jsonl") + " --p-correct 1.5") == 2);
  CHECK_FALSE(fs::exists(dir / "c.jsonl"));
  CHECK(run("--help") == 0);
}

TEST_CASE("cli: gen-corpus is reproducible and writes a manifest") {
  const auto dir = scratch("gen");
  REQUIRE(run("gen-corpus --out " + q(dir / "a.jsonl") + " --n-questions 25 --seed 7") == 0);
  REQUIRE(run("gen-corpus --out " + q(dir / "b.jsonl") + " --n-questions 25 --seed 7") == 0);
  CHECK(genqa::file_digest(dir / "a.jsonl") == genqa::file_digest(dir / "b.jsonl"));
  REQUIRE(fs::exists(dir / "a.jsonl.manifest.json"));
  std::ifstream in(dir / "a.jsonl.manifest.json");
  std::stringstream s;
  s << in.rdbuf();
  const auto m = genqa::parse_manifest(s.str());
  CHECK(m.command == "gen-corpus");
  CHECK(m.seed == 7);
  CHECK(m.outputs.size() == 1);
}

TEST_CASE("cli: build-dataset shaping flags and errors") {
  const auto dir = scratch("build");
  REQUIRE(run("gen-corpus --out " + q(dir / "c.jsonl") + " --n-questions 12 --seed 3") == 0);
  REQUIRE(run("build-dataset --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "d.jsonl") + " --sci --sco") == 0);
  CHECK(fs::exists(dir / "d.jsonl.stats.json"));
  CHECK(fs::exists(dir / "d.jsonl.vocab"));
  const auto vocab = genqa::Vocabulary::load(dir / "d.jsonl.vocab");
  const auto ds = genqa::read_dataset(dir / "d.jsonl", vocab);
  REQUIRE(ds.size() == 12);
  for (const auto& e : ds) CHECK(vocab.is_bucket(e.target_ids.front()));
  // Every question has fewer than k + 1 candidates: nothing to shape.
  CHECK(run("build-dataset --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "e.jsonl") + " --k 40") != 0);
  CHECK(run("build-dataset --corpus " + q(dir / "missing.jsonl") + " --out " + q(dir / "f.jsonl")) == 1);
  CHECK(run("build-dataset --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "g.jsonl") + " --k 0") == 2);
}

TEST_CASE("cli: select-checkpoint needs scores for the as2 criterion") {
  const auto dir = scratch("select");
  const std::vector<genqa::CheckpointRecord> no_scores{{"a.bin", 10, 1.0, std::nullopt}};
  genqa::write_records(no_scores, dir / "r.json");
  CHECK(run("select-checkpoint --records " + q(dir / "r.json")) == 1);
  CHECK(run("select-checkpoint --records " + q(dir / "r.json") + " --criterion loss") == 0);
  CHECK(run("select-checkpoint --records " + q(dir / "r.json") + " --criterion bleu") == 2);
}

TEST_CASE("cli: end-to-end smoke run") {
  const auto dir = scratch("e2e");
  REQUIRE(run("gen-corpus --out " + q(dir / "train.jsonl") + " --n-questions 30 --seed 1") == 0);
  REQUIRE(run("gen-corpus --out " + q(dir / "dev.jsonl") + " --n-questions 6 --seed 2") == 0);
  REQUIRE(run("build-dataset --corpus " + q(dir / "train.jsonl") + " --out " + q(dir / "ds.jsonl") + " --sco") == 0);
  REQUIRE(run("train --dataset " + q(dir / "ds.jsonl") + " --dev-corpus " + q(dir / "dev.jsonl") + " --out-dir " +
              q(dir / "run") +
              " --lw --max-steps 6 --checkpoint-every 3 --batch-size 4 --embed-dim 8 --hidden-dim 8 --lr 0.01") == 0);
  CHECK(fs::exists(dir / "run" / "ckpt-000003.bin"));
  CHECK(fs::exists(dir / "run" / "ckpt-000006.bin"));
  CHECK(fs::exists(dir / "run" / "manifest.json"));
  const auto records = genqa::read_records(dir / "run" / "records.json");
  REQUIRE(records.size() == 2);
  for (const auto& r : records) CHECK(r.avg_as2_score.has_value());
  REQUIRE(run("select-checkpoint --records " + q(dir / "run" / "records.json") + " --out " + q(dir / "sel.json")) == 0);

  const auto ckpt = dir / "run" / "ckpt-000006.bin";
  REQUIRE(run("generate --ckpt " + q(ckpt) + " --corpus " + q(dir / "dev.jsonl") + " --out " + q(dir / "gen.jsonl") +
              " --beam 2 --min-len 1 --max-len 4") == 0);
  const auto gens = genqa::read_generations(dir / "gen.jsonl");
  CHECK(gens.size() == 6);

  REQUIRE(run("generate --ckpt " + q(ckpt) + " --corpus " + q(dir / "dev.jsonl") + " --out " +
              q(dir / "forced.jsonl") + " --beam 2 --min-len 1 --max-len 4 --force-bucket [_MAYBE_] --limit 3") == 0);
  const auto forced = genqa::read_generations(dir / "forced.jsonl");
  REQUIRE(forced.size() == 3);
  for (const auto& g : forced) {
    CHECK(g.bucket == std::optional<std::string>("[_MAYBE_]"));
    CHECK(g.forced == std::optional<std::string>("[_MAYBE_]"));
  }
  CHECK(run("generate --ckpt " + q(ckpt) + " --corpus " + q(dir / "dev.jsonl") + " --out " + q(dir / "bad.jsonl") +
            " --force-bucket [_SURE_]") == 2);

  REQUIRE(run("evaluate --generations " + q(dir / "gen.jsonl") + " --corpus " + q(dir / "dev.jsonl") + " --report " +
              q(dir / "report.json") + " --csv " + q(dir / "ann.csv")) == 0);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "ann.csv"));
  CHECK(fs::exists(dir / "report.json.manifest.json"));
}
