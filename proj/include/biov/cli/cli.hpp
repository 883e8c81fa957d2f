#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace biov {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand (synth, pairs, train, eval, dream, report). args
/// excludes the program name. Returns 0 on success, 2 on a usage error and 1
/// on a runtime error; messages go to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

const char* tool_version();

/// Where a subcommand writes its run manifest: DIR/run_manifest.json for
/// directory outputs, FILE.manifest.json for single-file outputs.
std::filesystem::path run_manifest_path(const std::filesystem::path& out, bool out_is_dir);

}  // namespace biov
