#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace senti::utf8 {

/// Decodes UTF-8 into scalar values. Malformed sequences become U+FFFD.
std::u32string decode(std::string_view text);

std::string encode(char32_t cp);
std::string encode(std::u32string_view cps);

/// Unicode White_Space property.
bool is_space(char32_t cp) noexcept;

}  // namespace senti::utf8
