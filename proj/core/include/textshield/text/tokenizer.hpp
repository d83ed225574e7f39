#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace textshield::text {

using Tokens = std::vector<std::string>;

// Lowercases ASCII letters and splits on whitespace and ASCII punctuation,
// dropping the separators. Bytes >= 0x80 are kept inside tokens so UTF-8
// words survive intact. Throws FormatError("empty sentence") if nothing is
// left.
Tokens tokenize(std::string_view text);

std::string join(const Tokens& tokens, std::string_view sep = " ");

}  // namespace textshield::text
