#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctirb {

/// Splits text into case-preserving tokens.
///
/// Whitespace separates tokens and every other punctuation character is a
/// token of its own, except for three joiners that keep identifiers intact:
///   - '-', '_' and '\'' between two word characters ("rolled-out", "CVE-1")
///   - '.' and ':' between two word characters when either neighbour is a
///     digit ("v2.1", "2018:1852", "10.0.3")
/// Bytes >= 0x80 count as word characters so UTF-8 text survives untouched.
std::vector<std::string> tokenize(std::string_view text);

/// Lowercased form used for vocabulary and dictionary lookups.
std::string normalize_token(std::string_view token);

std::string join_tokens(std::span<const std::string> tokens);
std::string join_tokens(std::span<const std::string> tokens, std::size_t begin, std::size_t end);

}  // namespace ctirb
