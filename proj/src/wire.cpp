#include "snco/wire.hpp"

#include <fstream>
#include <sstream>

namespace snco::wire {

std::string read_file(const std::string& path, const std::string& what) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error(what + ": cannot open '" + path + "'");
  std::ostringstream ss;
  ss << file.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes,
                const std::string& what) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error(what + ": cannot open '" + path + "'");
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw std::runtime_error(what + ": write failed for '" + path + "'");
}

}  // namespace snco::wire
