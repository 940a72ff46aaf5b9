#pragma once

// File-tree helpers for the pipeline tests and the acceptance runner.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace ee::testing {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Relative path -> contents for every regular file under `root`.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) m[fs::relative(e.path(), root).string()] = read_file(e.path());
  return m;
}

/// Names of files that are missing on one side or differ in content; empty when identical.
inline std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b) {
  const auto sa = snapshot(a), sb = snapshot(b);
  std::vector<std::string> diff;
  for (const auto& [k, v] : sa) {
    auto it = sb.find(k);
    if (it == sb.end() || it->second != v) diff.push_back(k);
  }
  for (const auto& [k, v] : sb)
    if (!sa.count(k)) diff.push_back(k);
  return diff;
}

/// Runs the CLI binary with `args`, output redirected to `log`; returns the exit code.
inline int run_cli(const std::string& exe, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + exe + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

inline fs::path fresh_dir(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace ee::testing
