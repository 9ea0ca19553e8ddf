#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace genqa {

using TokenId = int;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kUnk = 4;
inline constexpr TokenId kYes = 5;
inline constexpr TokenId kProbably = 6;
inline constexpr TokenId kMaybe = 7;
inline constexpr TokenId kDoubt = 8;
inline constexpr TokenId kNo = 9;
inline constexpr TokenId kFirstWord = 10;
}  // namespace special

// Reserved token strings in id order (ids 0..9).
const std::vector<std::string>& reserved_tokens();

// A bucket over the teacher score range. `index` is 1-based, lowest
// confidence first: index i covers [(i-1)/l, i/l), the top bucket closed at 1.
struct BucketLabel {
  int index = 0;
  int levels = 0;
  std::string token;
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const BucketLabel&) const = default;
};

// Bucket token string for index i of l levels.
std::string bucket_token(int index, int levels);
bool is_bucket_string(std::string_view token);

// Immutable word-level vocabulary. Ids 0..9 are reserved (see `special`);
// with l != 5 the generated bucket tokens [_B1_]..[_Bl_] follow at id 10.
class Vocabulary {
 public:
  // Builds from a word list; duplicates and reserved strings are skipped,
  // remaining words keep their first-seen order.
  static Vocabulary build(std::span<const std::string> words, int levels = 5);

  std::size_t size() const { return id_to_token_.size(); }
  int levels() const { return levels_; }

  TokenId id(std::string_view token) const;  // [UNK] when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;

  bool is_bucket(TokenId id) const;
  // Id of the bucket token with the given 1-based index.
  TokenId bucket_id(int index) const;
  std::optional<BucketLabel> bucket_of(TokenId id) const;
  // All bucket ids, most confident first.
  std::vector<TokenId> bucket_ids_descending() const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // One token per line, id order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary from_tokens(std::vector<std::string> id_order);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  int levels_ = 5;
};

}  // namespace genqa
