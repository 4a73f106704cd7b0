#pragma once

#include <string>
#include <vector>

namespace pdatt {

inline constexpr const char* kVersion = "0.1.0";

// Parses argv, merges config file / env / flags (flags win), runs the
// subcommand and writes artifacts plus manifest.json. Returns the exit code:
// 0 ok, 2 config, 3 data, 4 numerical.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace pdatt
