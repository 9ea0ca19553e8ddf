#include "genqa/shaping.h"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "genqa/error.h"
#include "genqa/text.h"

namespace genqa {

BucketLabel bucket(double score, int levels) {
  if (levels < 1) throw Error("bucket: levels must be positive");
  if (!(score >= 0.0 && score <= 1.0)) throw Error("bucket: score " + std::to_string(score) + " outside [0,1]");
  const double l = levels;
  int i = std::min(static_cast<int>(std::floor(score * l)) + 1, levels);
  // Keep the index consistent with the interval edges (i-1)/l and i/l as
  // computed in floating point.
  while (i > 1 && score < (i - 1) / l) --i;
  while (i < levels && score >= i / l) ++i;
  return BucketLabel{i, levels, bucket_token(i, levels), (i - 1) / l, i == levels ? 1.0 : i / l};
}

void validate(const ShapingConfig& cfg) {
  if (cfg.k == 0) throw ConfigError("k", "must be positive");
  if (cfg.levels < 1) throw ConfigError("l", "must be positive");
  if (cfg.max_input_tokens == 0) throw ConfigError("max_input_tokens", "must be positive");
}

ShapedExample shape(const QAExample& example, const RankedCandidates& ranked, const ShapingConfig& cfg,
                    const Vocabulary& vocab) {
  validate(cfg);
  if (cfg.levels != vocab.levels()) throw ConfigError("l", "does not match the vocabulary's bucket count");
  if (split_tokens(example.question).empty()) throw Error("shape: example " + example.id + " has an empty question");
  if (example.candidates.size() < cfg.k + 1)
    throw Error("shape: example " + example.id + " has " + std::to_string(example.candidates.size()) +
                " candidates, need k + 1 = " + std::to_string(cfg.k + 1));
  if (ranked.example_id != example.id || ranked.ordered.size() != example.candidates.size())
    throw Error("shape: ranking is not aligned with example " + example.id);

  std::vector<TokenId> question = vocab.encode(example.question);
  std::vector<std::vector<TokenId>> segments;
  std::size_t total = question.size();
  for (std::size_t j = 1; j <= cfg.k; ++j) {
    const RankedEntry& entry = ranked.ordered[j];
    std::vector<TokenId> seg{special::kSep};
    if (cfg.sci) seg.push_back(vocab.bucket_id(bucket(entry.score, cfg.levels).index));
    auto words = vocab.encode(example.candidates[entry.index].text);
    seg.insert(seg.end(), words.begin(), words.end());
    total += seg.size();
    segments.push_back(std::move(seg));
  }

  const std::size_t limit = cfg.max_input_tokens;
  while (total > limit && segments.size() > 1) {
    total -= segments.back().size();
    segments.pop_back();
  }
  if (total > limit && !segments.empty()) {
    auto& last = segments.back();
    const std::size_t header = cfg.sci ? 2 : 1;
    const std::size_t room = limit > question.size() ? limit - question.size() : 0;
    if (room > header) {
      last.resize(room);
    } else {
      segments.pop_back();
    }
  }
  if (question.size() > limit) question.resize(limit);

  ShapedExample out;
  out.example_id = example.id;
  out.input_ids = std::move(question);
  for (const auto& seg : segments) out.input_ids.insert(out.input_ids.end(), seg.begin(), seg.end());
  out.k_used = segments.size();

  const RankedEntry& top = ranked.top();
  out.weight = top.score;
  out.target_bucket = bucket(top.score, cfg.levels);
  if (cfg.sco) out.target_ids.push_back(vocab.bucket_id(out.target_bucket.index));
  auto target = vocab.encode(example.candidates[top.index].text);
  out.target_ids.insert(out.target_ids.end(), target.begin(), target.end());
  out.target_ids.push_back(special::kEos);
  return out;
}

Dataset build_dataset(std::span<const QAExample> corpus, const Scorer& scorer, const ShapingConfig& cfg,
                      const Vocabulary& vocab) {
  validate(cfg);
  Dataset ds;
  for (int i = 1; i <= cfg.levels; ++i) ds.stats.bucket_histogram[bucket_token(i, cfg.levels)] = 0;
  double sum = 0.0;
  for (const auto& ex : corpus) {
    if (ex.candidates.size() < cfg.k + 1) {
      ++ds.stats.skipped;
      continue;
    }
    RankedCandidates ranked;
    try {
      ranked = rank(ex, scorer);
    } catch (const std::exception& e) {
      throw Error("scorer failed on example " + ex.id + ": " + e.what());
    }
    ShapedExample s = shape(ex, ranked, cfg, vocab);
    sum += s.weight;
    ds.stats.max_weight = std::max(ds.stats.max_weight, s.weight);
    ++ds.stats.bucket_histogram[s.target_bucket.token];
    ds.examples.push_back(std::move(s));
  }
  ds.stats.n = ds.examples.size();
  ds.stats.z = ds.stats.n == 0 ? 1.0 : sum / static_cast<double>(ds.stats.n);
  if (ds.stats.z <= 0.0) ds.stats.z = 1.0;
  return ds;
}

Vocabulary corpus_vocabulary(std::span<const QAExample> corpus, int levels) {
  std::set<std::string> words;
  for (const auto& ex : corpus) {
    for (auto& t : split_tokens(ex.question)) words.insert(std::move(t));
    for (const auto& c : ex.candidates)
      for (auto& t : split_tokens(c.text)) words.insert(std::move(t));
  }
  std::vector<std::string> sorted(words.begin(), words.end());
  return Vocabulary::build(sorted, levels);
}

std::vector<std::vector<TokenId>> context_candidates(std::span<const TokenId> input_ids, const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  bool in_candidate = false;
  for (TokenId id : input_ids) {
    if (id == special::kSep) {
      out.emplace_back();
      in_candidate = true;
      continue;
    }
    if (!in_candidate || id == special::kPad) continue;
    if (out.back().empty() && vocab.is_bucket(id)) continue;
    out.back().push_back(id);
  }
  return out;
}

// --- files ---------------------------------------------------------------------

std::string to_json_line(const ShapedExample& example) {
  nlohmann::ordered_json j;
  j["id"] = example.example_id;
  j["input_ids"] = example.input_ids;
  j["target_ids"] = example.target_ids;
  j["weight"] = example.weight;
  j["target_bucket"] = example.target_bucket.token;
  j["k_used"] = example.k_used;
  return j.dump();
}

void write_dataset(std::span<const ShapedExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& e : examples) out << to_json_line(e) << '\n';
  if (!out) throw Error("write failure on " + path.string());
}

std::vector<ShapedExample> read_dataset(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::vector<ShapedExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_tokens(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ShapedExample s;
      s.example_id = j.at("id").get<std::string>();
      s.input_ids = j.at("input_ids").get<std::vector<TokenId>>();
      s.target_ids = j.at("target_ids").get<std::vector<TokenId>>();
      s.weight = j.at("weight").get<double>();
      s.k_used = j.at("k_used").get<std::size_t>();
      auto label = vocab.bucket_of(vocab.id(j.at("target_bucket").get<std::string>()));
      if (!label) throw FormatError(line_no, "target_bucket", "not a bucket token of this vocabulary");
      s.target_bucket = *label;
      for (TokenId id : s.input_ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
          throw FormatError(line_no, "input_ids", "token id out of range");
      for (TokenId id : s.target_ids)
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
          throw FormatError(line_no, "target_ids", "token id out of range");
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, "<record>", e.what());
    }
  }
  return out;
}

std::string to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["Z"] = stats.z;
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [k, v] : stats.bucket_histogram) hist[k] = v;
  j["bucket_histogram"] = hist;
  j["skipped"] = stats.skipped;
  j["n"] = stats.n;
  j["max_weight"] = stats.max_weight;
  return j.dump(2);
}

void write_stats(const DatasetStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_json(stats) << '\n';
}

DatasetStats read_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stats file " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    DatasetStats s;
    s.z = j.at("Z").get<double>();
    s.n = j.at("n").get<std::size_t>();
    s.skipped = j.at("skipped").get<std::size_t>();
    s.max_weight = j.value("max_weight", 0.0);
    for (const auto& [k, v] : j.at("bucket_histogram").items()) s.bucket_histogram[k] = v.get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed stats file " + path.string() + ": " + e.what());
  }
}

}  // namespace genqa
