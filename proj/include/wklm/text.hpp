#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace wklm {

struct Token {
  std::string text;
  std::size_t begin = 0;  // byte offset into the source text
  std::size_t end = 0;
};

// Splits on ASCII whitespace; every ASCII punctuation character becomes a
// token of its own. Bytes >= 0x80 are treated as word characters, so UTF-8
// sequences stay intact.
std::vector<Token> tokenize_with_offsets(std::string_view text);
std::vector<std::string> tokenize(std::string_view text);

// Alias key used for indexing and matching: lower-cased tokens joined by a
// single space. Only ASCII letters are case-folded.
std::string normalize_surface(std::string_view text);
std::string normalize_tokens(const std::vector<std::string>& tokens,
                             std::size_t begin, std::size_t end);

std::string ascii_lower(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

}  // namespace wklm
