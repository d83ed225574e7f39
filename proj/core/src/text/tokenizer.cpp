#include "textshield/text/tokenizer.hpp"

#include "textshield/errors.hpp"

namespace textshield::text {

namespace {

bool is_separator(unsigned char c) {
  if (c >= 0x80) return false;
  const bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                     (c >= 'A' && c <= 'Z');
  return !alnum;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  for (unsigned char c : text) {
    if (is_separator(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                           : static_cast<char>(c));
  }
  if (!current.empty()) out.push_back(std::move(current));
  if (out.empty()) throw FormatError("empty sentence");
  return out;
}

std::string join(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace textshield::text
