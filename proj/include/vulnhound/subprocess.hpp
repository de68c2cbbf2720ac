#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vulnhound {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs `argv[0]` (PATH lookup) with the given arguments, capturing stdout and
// stderr. No shell is involved. Throws std::system_error if spawning fails.
ProcessResult run_process(const std::vector<std::string>& argv);

}  // namespace vulnhound
