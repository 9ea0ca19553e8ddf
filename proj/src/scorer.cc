#include "genqa/scorer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "genqa/error.h"
#include "genqa/random.h"
#include "genqa/text.h"

namespace genqa {

std::vector<double> score_candidates(const Scorer& scorer, const QAExample& example) {
  std::vector<double> out;
  out.reserve(example.candidates.size());
  for (const auto& c : example.candidates) {
    double s = scorer.score(example.question, c.text);
    if (!(s >= 0.0 && s <= 1.0))
      throw Error("scorer '" + scorer.name() + "' returned " + std::to_string(s) +
                  " outside [0,1] for example " + example.id);
    out.push_back(s);
  }
  return out;
}

RankedCandidates rank_scores(std::string example_id, std::span<const double> scores) {
  if (scores.empty()) throw Error("rank: example " + example_id + " has no candidates");
  RankedCandidates r{std::move(example_id), {}};
  r.ordered.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) r.ordered.push_back({i, scores[i]});
  std::stable_sort(r.ordered.begin(), r.ordered.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
  return r;
}

RankedCandidates rank(const QAExample& example, const Scorer& scorer) {
  if (example.candidates.empty()) throw Error("rank: example " + example.id + " has no candidates");
  auto scores = score_candidates(scorer, example);
  return rank_scores(example.id, scores);
}

double precision_at_1(std::span<const RankedCandidates> ranked, std::span<const QAExample> corpus) {
  if (ranked.empty()) throw Error("precision_at_1: no rankings");
  std::unordered_map<std::string_view, const QAExample*> by_id;
  for (const auto& e : corpus) by_id.emplace(e.id, &e);
  std::size_t hits = 0;
  for (const auto& r : ranked) {
    auto it = by_id.find(r.example_id);
    if (it == by_id.end()) throw Error("precision_at_1: unknown example " + r.example_id);
    const auto& cand = it->second->candidates.at(r.top().index);
    if (!cand.gold_label) throw Error("precision_at_1: example " + r.example_id + " lacks gold labels");
    hits += *cand.gold_label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

// --- oracle ----------------------------------------------------------------------

void validate(const OracleScorerConfig& cfg) {
  if (!(cfg.mean_incorrect >= 0.0 && cfg.mean_incorrect < cfg.mean_correct && cfg.mean_correct <= 1.0))
    throw ConfigError("mean_correct", "require 0 <= mean_incorrect < mean_correct <= 1");
  if (!(cfg.spread >= 0.0)) throw ConfigError("spread", "must be non-negative");
  if (!(cfg.flip_prob >= 0.0 && cfg.flip_prob < 0.5)) throw ConfigError("flip_prob", "must lie in [0, 0.5)");
  if (!(cfg.agreement_weight >= 0.0 && cfg.agreement_weight <= 1.0))
    throw ConfigError("agreement_weight", "must lie in [0, 1]");
}

namespace {

double correct_share(const QAExample& example) {
  std::size_t n = 0;
  for (const auto& c : example.candidates)
    if (oracle_correct(c.text, example)) ++n;
  return example.candidates.empty() ? 0.0
                                    : static_cast<double>(n) / static_cast<double>(example.candidates.size());
}

}  // namespace

double oracle_score(std::string_view question, std::string_view answer, const QAExample& example,
                    const OracleScorerConfig& cfg) {
  bool label = oracle_correct(answer, example);
  if (cfg.flip_prob > 0.0 && unit_interval(hash_parts(cfg.seed, {"flip", question, answer})) < cfg.flip_prob)
    label = !label;
  double centre = cfg.mean_incorrect;
  if (label) {
    double share = cfg.agreement_weight > 0.0 ? correct_share(example) : 1.0;
    centre = cfg.mean_incorrect + (cfg.mean_correct - cfg.mean_incorrect) *
                                      ((1.0 - cfg.agreement_weight) + cfg.agreement_weight * share);
  }
  double u = unit_interval(hash_parts(cfg.seed, {"noise", question, answer}));
  return std::clamp(centre + cfg.spread * (2.0 * u - 1.0), 0.0, 1.0);
}

ExampleIndex::ExampleIndex(std::span<const QAExample> corpus) : examples_(corpus.begin(), corpus.end()) {
  for (std::size_t i = 0; i < examples_.size(); ++i)
    if (!by_question_.emplace(examples_[i].question, i).second)
      throw Error("duplicate question text in scorer index: \"" + examples_[i].question + "\"");
}

const QAExample& ExampleIndex::at(std::string_view question) const {
  auto it = by_question_.find(std::string(question));
  if (it == by_question_.end()) throw Error("oracle scorer: unknown question \"" + std::string(question) + "\"");
  return examples_[it->second];
}

bool ExampleIndex::contains(std::string_view question) const {
  return by_question_.count(std::string(question)) > 0;
}

OracleScorer::OracleScorer(std::shared_ptr<const ExampleIndex> index, OracleScorerConfig cfg)
    : index_(std::move(index)), cfg_(cfg) {
  validate(cfg_);
}

double OracleScorer::score(std::string_view question, std::string_view answer) const {
  return oracle_score(question, answer, index_->at(question), cfg_);
}

CorruptingTeacher::CorruptingTeacher(std::shared_ptr<const ExampleIndex> index, CorruptingTeacherConfig cfg)
    : index_(std::move(index)), cfg_(cfg) {
  validate(cfg_.base);
  if (!(cfg_.corrupt_rate >= 0.0 && cfg_.corrupt_rate <= 1.0))
    throw ConfigError("corrupt_rate", "must lie in [0, 1]");
  if (!(cfg_.top_low > 0.0 && cfg_.top_low <= cfg_.top_high && cfg_.top_high <= 1.0))
    throw ConfigError("top_low", "require 0 < top_low <= top_high <= 1");
}

std::size_t CorruptingTeacher::promoted(const QAExample& example) const {
  std::size_t best = std::string::npos;
  std::uint64_t best_h = 0;
  for (std::size_t i = 0; i < example.candidates.size(); ++i) {
    const auto& text = example.candidates[i].text;
    if (oracle_correct(text, example)) continue;
    std::uint64_t h = hash_parts(cfg_.base.seed, {"promote", example.question, text});
    if (best == std::string::npos || h < best_h) {
      best = i;
      best_h = h;
    }
  }
  return best;
}

bool CorruptingTeacher::corrupted(const QAExample& example) const {
  if (unit_interval(hash_parts(cfg_.base.seed, {"corrupt", example.question})) >= cfg_.corrupt_rate)
    return false;
  return promoted(example) != std::string::npos;
}

double CorruptingTeacher::score(std::string_view question, std::string_view answer) const {
  const QAExample& ex = index_->at(question);
  const double base = oracle_score(question, answer, ex, cfg_.base);
  if (!corrupted(ex)) return base;
  const std::size_t p = promoted(ex);
  if (ex.candidates[p].text == answer) {
    double u = unit_interval(hash_parts(cfg_.base.seed, {"promoted", question, answer}));
    return cfg_.top_low + (cfg_.top_high - cfg_.top_low) * u;
  }
  bool is_candidate = std::any_of(ex.candidates.begin(), ex.candidates.end(),
                                  [&](const Candidate& c) { return c.text == answer; });
  if (!is_candidate) return base;
  return base * cfg_.top_low * 0.99;
}

double overlap_score(std::string_view question, std::string_view answer) {
  auto q = split_tokens(question);
  auto a = split_tokens(answer);
  if (q.empty() || a.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : q) ++counts[t];
  std::size_t shared = 0;
  for (const auto& t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++shared;
    }
  }
  if (shared == 0) return 0.0;
  double precision = static_cast<double>(shared) / static_cast<double>(a.size());
  double recall = static_cast<double>(shared) / static_cast<double>(q.size());
  return 2.0 * precision * recall / (precision + recall);
}

void write_scores(std::span<const ScoreRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["scores"] = r.scores;
    out << j.dump() << '\n';
  }
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scores file " + path.string());
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_tokens(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("scores").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, "<record>", e.what());
    }
  }
  return out;
}

}  // namespace genqa
