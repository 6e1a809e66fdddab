#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>

namespace socialveil {

// Files under data/ compiled into the library, keyed by their relative path
// (e.g. "prompts/agent.txt").
const std::map<std::string, std::string_view, std::less<>>& embedded_resources();

// Returns the embedded resource or throws InputError.
std::string_view resource(std::string_view name);

std::string read_file(const std::filesystem::path& path);

}  // namespace socialveil
