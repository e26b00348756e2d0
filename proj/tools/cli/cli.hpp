#pragma once
// latentmark command-line front end.
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace latentmark::cli {

enum ExitCode : int { kOk = 0, kNotDetected = 1, kUsage = 2, kIo = 3 };

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Flat key=value file. '#' starts a comment, blank lines are skipped,
/// keys and values are trimmed. Throws IoError / FormatError.
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Moves --config entries in front of the command-line flags so that the
/// flags win: args = [subcommand, flags...] becomes
/// [subcommand, --k=v (from file)..., flags without --config...].
std::vector<std::string> expand_config(const std::vector<std::string>& args);

/// args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace latentmark::cli
