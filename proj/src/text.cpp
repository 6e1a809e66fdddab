#include "socialveil/text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "socialveil/errors.hpp"

namespace socialveil {

std::string format_template(std::string_view tmpl, const TemplateVars& vars) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  for (size_t i = 0; i < tmpl.size(); ++i) {
    char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      size_t close = tmpl.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw InputError("unbalanced '{' in template at offset " + std::to_string(i));
      }
      std::string_view name = tmpl.substr(i + 1, close - i - 1);
      auto it = vars.find(name);
      if (it == vars.end()) {
        throw InputError("template placeholder {" + std::string(name) + "} has no value");
      }
      out += it->second;
      i = close;
    } else if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
        out.push_back('}');
        ++i;
        continue;
      }
      throw InputError("unbalanced '}' in template at offset " + std::to_string(i));
    } else {
      out.push_back(c);
    }
  }
  return out;
}

namespace {

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Index just past the last terminator run outside quotes, or npos.
struct TerminatorScan {
  int count = 0;
  size_t last_end = std::string_view::npos;
};

TerminatorScan scan_terminators(std::string_view text) {
  TerminatorScan scan;
  bool in_quotes = false;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '"') {
      in_quotes = !in_quotes;
      continue;
    }
    if (in_quotes || !is_terminal(c)) continue;
    if (c == '.' && i > 0 && i + 1 < text.size() && is_digit(text[i - 1]) &&
        is_digit(text[i + 1])) {
      continue;
    }
    size_t j = i;
    while (j < text.size() && is_terminal(text[j])) ++j;
    ++scan.count;
    scan.last_end = j;
    i = j - 1;
  }
  return scan;
}

}  // namespace

int count_sentence_terminators(std::string_view text) {
  return scan_terminators(text).count;
}

bool is_single_sentence(std::string_view text) {
  std::string t = trim(text);
  TerminatorScan scan = scan_terminators(t);
  if (scan.count != 1) return false;
  // Only closing punctuation may follow the terminator.
  for (size_t i = scan.last_end; i < t.size(); ++i) {
    char c = t[i];
    if (c != '"' && c != '\'' && c != ')' && c != ']' &&
        !std::isspace(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  return haystack.find(needle) != std::string_view::npos;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace socialveil
