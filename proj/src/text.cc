#include "genqa/text.h"

#include <algorithm>
#include <cctype>
#include <limits>

#include "genqa/random.h"

namespace genqa {

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool contains_token_run(std::span<const std::string> haystack,
                        std::span<const std::string> needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

std::uint64_t hash_parts(std::uint64_t seed, std::initializer_list<std::string_view> parts) {
  // FNV-1a over length-prefixed parts, finalized with SplitMix.
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (std::string_view p : parts) {
    std::uint64_t n = p.size();
    for (int b = 0; b < 8; ++b) feed(static_cast<unsigned char>(n >> (8 * b)));
    for (char c : p) feed(static_cast<unsigned char>(c));
  }
  return mix64(h);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

}  // namespace genqa
