#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace asvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of the `asvae` tool: train, enhance, evaluate, synth-data and
// sample-noise subcommands. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Same, with the arguments after the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asvae::cli
