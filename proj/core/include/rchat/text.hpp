#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rchat::text {

// Byte offsets of every code point start, plus a final entry equal to
// s.size(). Returns false on any invalid UTF-8 sequence.
bool utf8_boundaries(std::string_view s, std::vector<std::size_t>& out);
bool is_valid_utf8(std::string_view s);

// Longest prefix of s that is at most max_bytes long and ends on a code
// point boundary.
std::string_view utf8_prefix(std::string_view s, std::size_t max_bytes);

std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_upper_ascii(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// trim + whitespace collapse + upper-case; the merge key for entities.
std::string canonical_name(std::string_view s);

std::vector<std::string> split(std::string_view s, std::string_view delim);
bool contains(std::string_view haystack, std::string_view needle);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Lower-cased alphanumeric runs (plus '_'); bytes >= 0x80 are kept inside
// words so non-ASCII text still tokenizes.
std::vector<std::string> word_tokens(std::string_view s);

// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

// Fills {name} placeholders from the given pairs; unknown placeholders are
// left untouched.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Current UTC time as RFC-3339 with millisecond precision.
std::string utc_now_rfc3339();

}  // namespace rchat::text
