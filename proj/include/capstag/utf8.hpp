#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace capstag {

// Splits UTF-8 text into single-codepoint strings. Bytes that do not start a
// valid sequence are passed through as one-byte characters.
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace capstag
