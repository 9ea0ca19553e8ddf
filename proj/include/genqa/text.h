#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace genqa {

// Whitespace tokenization shared by the corpus, the oracle and the tokenizer.
std::vector<std::string> split_tokens(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

// True iff `needle` occurs as a contiguous run of whole tokens in `haystack`.
// An empty needle never matches.
bool contains_token_run(std::span<const std::string> haystack,
                        std::span<const std::string> needle);

}  // namespace genqa
