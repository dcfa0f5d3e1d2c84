#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace massnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs one of: train, eval, predict, ablate, synth, segment. Diagnostics go to
// err as a single line.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

// MASSCON_RUNS_DIR when set, otherwise the configured output root.
std::filesystem::path runs_root(const std::filesystem::path& configured);

}  // namespace massnet::cli
