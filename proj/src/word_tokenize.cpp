#include "codelid/bpe.hpp"
#include "codelid/text.hpp"

namespace codelid {

namespace {

bool is_identifier_char(unsigned char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

bool is_separator(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_separator(c)) {
      ++i;
    } else if (c == '\n') {
      tokens.emplace_back("\n");
      ++i;
    } else if (is_identifier_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_identifier_char(static_cast<unsigned char>(text[j]))) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      // One punctuation character; a multi-byte code point stays whole.
      std::size_t len = std::min(utf8_sequence_length(c), text.size() - i);
      tokens.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  return tokens;
}

}  // namespace codelid
