#include "socialveil/resources.hpp"

#include <fstream>
#include <sstream>

#include "socialveil/errors.hpp"

namespace socialveil {

std::string_view resource(std::string_view name) {
  const auto& all = embedded_resources();
  auto it = all.find(name);
  if (it == all.end()) {
    throw InputError("no embedded resource named '" + std::string(name) + "'");
  }
  return it->second;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace socialveil
