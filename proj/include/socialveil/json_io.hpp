#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "socialveil/core.hpp"
#include "socialveil/errors.hpp"

namespace socialveil {

// Field order in output follows declaration order, so serialized files are
// byte-stable.
using Json = nlohmann::ordered_json;

void to_json(Json& j, const Scenario& v);
void from_json(const Json& j, Scenario& v);
void to_json(Json& j, const AgentProfile& v);
void from_json(const Json& j, AgentProfile& v);
void to_json(Json& j, const SocialGoal& v);
void from_json(const Json& j, SocialGoal& v);
void to_json(Json& j, const BarrierSpec& v);
void from_json(const Json& j, BarrierSpec& v);
void to_json(Json& j, const Episode& v);
void from_json(const Json& j, Episode& v);
void to_json(Json& j, const AgentAction& v);
void from_json(const Json& j, AgentAction& v);
void to_json(Json& j, const TurnMetadata& v);
void from_json(const Json& j, TurnMetadata& v);
void to_json(Json& j, const Turn& v);
void from_json(const Json& j, Turn& v);
void to_json(Json& j, const Transcript& v);
void from_json(const Json& j, Transcript& v);

// Field access that reports the missing/mistyped field as an InputError.
template <class T>
T get_field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw InputError(std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_field_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return get_field<T>(j, key);
}

Json parse_json(const std::string& text, const std::string& origin);

// Newline-delimited JSON; blank lines are skipped. Errors name file and line.
template <class T>
std::vector<T> read_ndjson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_json(line, path.string()).template get<T>());
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <class T>
std::string to_ndjson(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) {
    out += Json(item).dump();
    out += '\n';
  }
  return out;
}

// Writes via a temporary file and rename, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& content);

template <class T>
void write_ndjson(const std::filesystem::path& path, const std::vector<T>& items) {
  write_text_file(path, to_ndjson(items));
}

}  // namespace socialveil
