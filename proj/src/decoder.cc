#include "genqa/decoder.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "genqa/error.h"
#include "genqa/text.h"

namespace genqa {

void validate(const DecodeConfig& cfg) {
  if (cfg.beam_width < 1) throw ConfigError("beam_width", "must be at least 1");
  if (cfg.min_len < 1) throw ConfigError("min_len", "must be at least 1");
  if (cfg.max_len < cfg.min_len) throw ConfigError("max_len", "must be at least min_len");
}

namespace {

struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;
  std::size_t counted = 0;  // length as seen by the min/max window
  bool has_bucket = false;
  DecoderState state;  // state after consuming all but the last token
  bool finished = false;
  std::size_t finish_step = 0;
};

class Search {
 public:
  Search(const Parameters& p, const ModelConfig& m, const Vocabulary& v, std::span<const TokenId> input,
         const DecodeConfig& cfg)
      : p_(p), m_(m), v_(v), cfg_(cfg), enc_(encode(p, m, input)) {
    validate(cfg);
    if (m.vocab_size != v.size()) throw Error("decoder: vocabulary does not match the model");
    if (cfg.force_first_token && !v.is_bucket(*cfg.force_first_token))
      throw Error("forced first token " + std::to_string(*cfg.force_first_token) + " is not a bucket token");
    bool any_word = false;
    for (std::size_t id = special::kFirstWord; id < v.size() && !any_word; ++id)
      any_word = !v.is_bucket(static_cast<TokenId>(id));
    if (!any_word) throw Error("decoder: vocabulary has no content tokens");
  }

  Hypothesis root() const {
    Hypothesis h;
    h.state = initial_state(enc_);
    return h;
  }

  // Log-probabilities for the token following `h`, and the state after
  // consuming h's last token.
  Eigen::VectorXd next_log_probs(const Hypothesis& h, DecoderState& next) const {
    TokenId prev = h.tokens.empty() ? special::kBos : h.tokens.back();
    return log_softmax(step_logits(p_, m_, enc_, h.state, prev, next));
  }

  bool allowed(const Hypothesis& h, TokenId t) const {
    const std::size_t pos = h.tokens.size();
    if (pos == 0 && cfg_.force_first_token) return t == *cfg_.force_first_token;
    if (t == special::kEos) return h.counted >= cfg_.min_len;
    if (t < special::kFirstWord && !v_.is_bucket(t)) return false;
    if (v_.is_bucket(t)) return pos == 0 && cfg_.allow_leading_bucket;
    return true;
  }

  Hypothesis extend(const Hypothesis& h, TokenId t, double lp, const DecoderState& next, std::size_t step) const {
    Hypothesis c;
    c.tokens = h.tokens;
    c.tokens.push_back(t);
    c.score = h.score + lp;
    c.has_bucket = h.has_bucket;
    c.counted = h.counted;
    c.state = next;
    if (t == special::kEos) {
      c.finished = true;
    } else if (v_.is_bucket(t) && c.tokens.size() == 1) {
      c.has_bucket = true;
      if (cfg_.length_counts_bucket) ++c.counted;
    } else {
      ++c.counted;
    }
    if (!c.finished && c.counted >= cfg_.max_len) c.finished = true;
    if (c.finished) c.finish_step = step;
    return c;
  }

  Generation to_generation(const Hypothesis& h) const {
    Generation g;
    g.token_ids = h.tokens;
    g.log_prob = h.score;
    g.finished = !h.tokens.empty() && h.tokens.back() == special::kEos;
    Stripped s = strip_bucket(h.tokens, v_);
    g.bucket = s.bucket;
    g.text = v_.decode(s.content);
    return g;
  }

  const DecodeConfig& cfg() const { return cfg_; }

 private:
  const Parameters& p_;
  const ModelConfig& m_;
  const Vocabulary& v_;
  DecodeConfig cfg_;
  EncodedInput enc_;
};

bool lexicographic_less(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

Generation greedy(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                  std::span<const TokenId> input_ids, const DecodeConfig& cfg) {
  Search search(params, model, vocab, input_ids, cfg);
  Hypothesis h = search.root();
  for (std::size_t step = 0; !h.finished; ++step) {
    DecoderState next;
    Eigen::VectorXd lp = search.next_log_probs(h, next);
    TokenId best = -1;
    for (TokenId t = 0; t < static_cast<TokenId>(lp.size()); ++t)
      if (search.allowed(h, t) && (best < 0 || lp(t) > lp(best))) best = t;
    if (best < 0) throw Error("greedy: no admissible token");
    h = search.extend(h, best, lp(best), next, step);
  }
  return search.to_generation(h);
}

BeamResult beam(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                std::span<const TokenId> input_ids, const DecodeConfig& cfg) {
  Search search(params, model, vocab, input_ids, cfg);
  std::vector<Hypothesis> alive{search.root()};
  std::vector<Hypothesis> finished;

  struct Expansion {
    double score;
    std::size_t parent;
    TokenId token;
  };

  for (std::size_t step = 0; !alive.empty(); ++step) {
    std::vector<DecoderState> next(alive.size());
    std::vector<Eigen::VectorXd> lps(alive.size());
    std::vector<Expansion> pool;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      lps[i] = search.next_log_probs(alive[i], next[i]);
      for (TokenId t = 0; t < static_cast<TokenId>(lps[i].size()); ++t)
        if (search.allowed(alive[i], t)) pool.push_back({alive[i].score + lps[i](t), i, t});
    }
    if (pool.empty()) throw Error("beam: no admissible token");
    auto seq_less = [&alive](const Expansion& a, const Expansion& b) {
      const auto& pa = alive[a.parent].tokens;
      const auto& pb = alive[b.parent].tokens;
      if (pa != pb) return lexicographic_less(pa, pb);
      return a.token < b.token;
    };
    std::sort(pool.begin(), pool.end(), [&](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      return seq_less(a, b);
    });
    // Finished candidates are kept when they rank within the beam; the live
    // beam is refilled to full width from the best unfinished candidates.
    std::vector<Hypothesis> survivors;
    for (std::size_t rank = 0; rank < pool.size() && survivors.size() < cfg.beam_width; ++rank) {
      const Expansion& e = pool[rank];
      Hypothesis c = search.extend(alive[e.parent], e.token, lps[e.parent](e.token), next[e.parent], step);
      if (!c.finished) {
        survivors.push_back(std::move(c));
      } else if (rank < cfg.beam_width) {
        finished.push_back(std::move(c));
      }
    }
    alive = std::move(survivors);

    // Log-probabilities are non-positive, so no live hypothesis can overtake
    // a finished one that already scores at least as high.
    if (!finished.empty() && !alive.empty()) {
      double best_done = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& a : alive) best_alive = std::max(best_alive, a.score);
      if (best_done >= best_alive) break;
    }
  }

  std::sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.finish_step != b.finish_step) return a.finish_step < b.finish_step;
    return lexicographic_less(a.tokens, b.tokens);
  });
  BeamResult out;
  for (const auto& f : finished) out.n_best.push_back(search.to_generation(f));
  if (out.n_best.empty()) throw Error("beam: search ended without a hypothesis");
  out.best = out.n_best.front();
  return out;
}

Generation decode(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                  std::span<const TokenId> input_ids, const DecodeConfig& cfg) {
  if (cfg.beam_width == 1) return greedy(params, model, vocab, input_ids, cfg);
  return beam(params, model, vocab, input_ids, cfg).best;
}

Generation forced_decode(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                         std::span<const TokenId> input_ids, const DecodeConfig& cfg) {
  if (!cfg.force_first_token) throw Error("forced_decode: no token to force");
  return decode(params, model, vocab, input_ids, cfg);
}

std::vector<Generation> forced_sweep(const Parameters& params, const ModelConfig& model, const Vocabulary& vocab,
                                     std::span<const TokenId> input_ids, const DecodeConfig& cfg) {
  std::vector<Generation> out;
  for (TokenId b : vocab.bucket_ids_descending()) {
    DecodeConfig c = cfg;
    c.force_first_token = b;
    out.push_back(forced_decode(params, model, vocab, input_ids, c));
  }
  return out;
}

Stripped strip_bucket(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  Stripped s;
  std::size_t start = 0;
  if (!tokens.empty() && vocab.is_bucket(tokens.front())) {
    s.bucket = vocab.bucket_of(tokens.front());
    start = 1;
  }
  for (std::size_t i = start; i < tokens.size(); ++i) {
    if (tokens[i] == special::kEos) break;
    if (tokens[i] == special::kPad) continue;
    s.content.push_back(tokens[i]);
  }
  return s;
}

GenerationRecord to_record(const std::string& id, const Generation& g, const Vocabulary& vocab,
                           const std::optional<TokenId>& forced) {
  GenerationRecord r;
  r.id = id;
  r.text = g.text;
  if (g.bucket) r.bucket = g.bucket->token;
  r.log_prob = g.log_prob;
  if (forced) r.forced = vocab.token(*forced);
  return r;
}

void write_generations(std::span<const GenerationRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    if (r.bucket) j["bucket"] = *r.bucket;
    j["log_prob"] = r.log_prob;
    if (r.forced) j["forced"] = *r.forced;
    out << j.dump() << '\n';
  }
  if (!out) throw Error("write failure on " + path.string());
}

std::vector<GenerationRecord> read_generations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open generations file " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_tokens(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      GenerationRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      if (j.contains("bucket")) r.bucket = j.at("bucket").get<std::string>();
      r.log_prob = j.at("log_prob").get<double>();
      if (j.contains("forced")) r.forced = j.at("forced").get<std::string>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, "<record>", e.what());
    }
  }
  return out;
}

}  // namespace genqa
