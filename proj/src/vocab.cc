#include "genqa/vocab.h"

#include <fstream>

#include "genqa/error.h"
#include "genqa/text.h"

namespace genqa {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kReserved = {
      "[PAD]", "[BOS]", "[EOS]", "[SEP]", "[UNK]", "[_YES_]", "[_PROBABLY_]", "[_MAYBE_]", "[_DOUBT_]", "[_NO_]"};
  return kReserved;
}

std::string bucket_token(int index, int levels) {
  if (index < 1 || index > levels) throw Error("bucket index out of range");
  if (levels == 5) return reserved_tokens()[static_cast<std::size_t>(special::kFirstWord - index)];
  return "[_B" + std::to_string(index) + "_]";
}

bool is_bucket_string(std::string_view token) {
  for (TokenId id = special::kYes; id <= special::kNo; ++id)
    if (token == reserved_tokens()[static_cast<std::size_t>(id)]) return true;
  return token.size() > 5 && token.substr(0, 3) == "[_B" && token.substr(token.size() - 2) == "_]";
}

Vocabulary Vocabulary::build(std::span<const std::string> words, int levels) {
  if (levels < 1) throw ConfigError("l", "must be positive");
  std::vector<std::string> order = reserved_tokens();
  if (levels != 5)
    for (int i = 1; i <= levels; ++i) order.push_back(bucket_token(i, levels));
  Vocabulary v = from_tokens(std::move(order));
  v.levels_ = levels;
  for (const auto& w : words) {
    if (w.empty() || v.token_to_id_.count(w) || is_bucket_string(w)) continue;
    v.token_to_id_.emplace(w, static_cast<TokenId>(v.id_to_token_.size()));
    v.id_to_token_.push_back(w);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_order) {
  const auto& reserved = reserved_tokens();
  if (id_order.size() < reserved.size()) throw Error("vocabulary lacks the reserved tokens");
  for (std::size_t i = 0; i < reserved.size(); ++i)
    if (id_order[i] != reserved[i]) throw Error("vocabulary id " + std::to_string(i) + " must be " + reserved[i]);
  Vocabulary v;
  v.id_to_token_ = std::move(id_order);
  int generated = 0;
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i)).second)
      throw Error("duplicate vocabulary token " + v.id_to_token_[i]);
    if (i >= reserved.size() && is_bucket_string(v.id_to_token_[i])) ++generated;
  }
  v.levels_ = generated > 0 ? generated : 5;
  for (int i = 1; generated > 0 && i <= generated; ++i)
    if (v.id_to_token_[static_cast<std::size_t>(special::kFirstWord + i - 1)] != bucket_token(i, generated))
      throw Error("generated bucket tokens must directly follow the reserved ids");
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? special::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw Error("token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::is_bucket(TokenId id) const {
  if (levels_ == 5) return id >= special::kYes && id <= special::kNo;
  return id >= special::kFirstWord && id < special::kFirstWord + levels_;
}

TokenId Vocabulary::bucket_id(int index) const {
  if (index < 1 || index > levels_) throw Error("bucket index out of range");
  return levels_ == 5 ? special::kFirstWord - index : special::kFirstWord + index - 1;
}

std::optional<BucketLabel> Vocabulary::bucket_of(TokenId id) const {
  if (!is_bucket(id)) return std::nullopt;
  int index = levels_ == 5 ? special::kFirstWord - id : id - special::kFirstWord + 1;
  const double l = levels_;
  return BucketLabel{index, levels_, token(id), (index - 1) / l, index == levels_ ? 1.0 : index / l};
}

std::vector<TokenId> Vocabulary::bucket_ids_descending() const {
  std::vector<TokenId> out;
  for (int i = levels_; i >= 1; --i) out.push_back(bucket_id(i));
  return out;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& t : split_tokens(text)) out.push_back(id(t));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

}  // namespace genqa
