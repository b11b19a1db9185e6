#pragma once

// Runs the scalenet binary through the shell and captures stdout.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace testutil {

struct CliResult {
  int code = -1;
  std::string out;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// `args` is appended verbatim; stderr is discarded unless `keep_stderr`.
inline CliResult run_cli(const std::string& binary, const std::string& args, const std::filesystem::path& scratch,
                         bool keep_stderr = false) {
  const auto out = scratch / "stdout.txt";
  const std::string cmd = "'" + binary + "' " + args + " > '" + out.string() + "'" +
                          (keep_stderr ? "" : " 2>/dev/null");
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  return r;
}

// Value of the first `key=` line, or NaN.
inline double field(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) return std::stod(line.substr(key.size() + 1));
  }
  return std::nan("");
}

}  // namespace testutil
