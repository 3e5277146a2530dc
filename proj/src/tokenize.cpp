#include "ctirb/tokenize.hpp"

#include <cctype>

namespace ctirb {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(c));
      continue;
    }
    if (std::isspace(c) != 0) {
      flush();
      continue;
    }
    const bool has_prev = !current.empty();
    const bool has_next = i + 1 < text.size() && is_word_char(static_cast<unsigned char>(text[i + 1]));
    if (has_prev && has_next) {
      const auto prev = static_cast<unsigned char>(current.back());
      const auto next = static_cast<unsigned char>(text[i + 1]);
      const bool joiner = c == '-' || c == '_' || c == '\'';
      const bool numeric_joiner = (c == '.' || c == ':') && (is_digit(prev) || is_digit(next));
      if (joiner || numeric_joiner) {
        current.push_back(static_cast<char>(c));
        continue;
      }
    }
    flush();
    tokens.emplace_back(1, static_cast<char>(c));
  }
  flush();
  return tokens;
}

std::string normalize_token(std::string_view token) {
  std::string out(token);
  for (auto& ch : out) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) ch = static_cast<char>(std::tolower(c));
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  return join_tokens(tokens, 0, tokens.size());
}

std::string join_tokens(std::span<const std::string> tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
    if (i > begin) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace ctirb
