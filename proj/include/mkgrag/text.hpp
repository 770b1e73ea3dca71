#pragma once
#include <string>
#include <string_view>
#include <vector>

namespace mkgrag::text {

// Whitespace-delimited word tokens. This is the token unit used by chunk
// policies and context budgets throughout the engine.
std::vector<std::string> words(std::string_view s);
std::size_t count_words(std::string_view s);

// Lowercased alphanumeric tokens (split on every non-alphanumeric byte).
std::vector<std::string> alnum_tokens(std::string_view s);

std::string trim(std::string_view s);
std::string to_upper(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);

// Sentence split on '.', '!', '?' followed by whitespace or end of text.
// The terminator stays with its sentence.
std::vector<std::string> sentences(std::string_view s);

}  // namespace mkgrag::text
