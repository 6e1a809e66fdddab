#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace socialveil {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

// Substitutes {name} placeholders. "{{" and "}}" render as literal braces.
// Throws InputError for a placeholder with no binding or an unbalanced brace.
std::string format_template(std::string_view tmpl, const TemplateVars& vars);

// Counts runs of terminal punctuation {., !, ?} outside double quotes.
// A run ("...", "?!") counts once; a period between two digits does not count.
int count_sentence_terminators(std::string_view text);

// Exactly one terminator run, and it closes the text (closing quotes or
// brackets may follow it).
bool is_single_sentence(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool contains(std::string_view haystack, std::string_view needle);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace socialveil
