#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wordeval {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `wordeval` command. `args` excludes the program name.
/// Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads a flat `key = value` config file and returns `--key=value`
/// arguments for every key that `args` does not already set.
std::vector<std::string> config_arguments(const std::string& path, const std::vector<std::string>& args);

}  // namespace wordeval
