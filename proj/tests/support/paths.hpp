#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testutil {

inline std::filesystem::path repo_dir() {
  return std::filesystem::path(VSTAB_REPO_DIR);
}

inline std::filesystem::path data_file(const std::string& rel) {
  return repo_dir() / rel;
}

// Per-purpose scratch space under the system temp dir. Contents are
// regenerated by the tests that use them; stale files are harmless.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vstab_test_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace testutil
