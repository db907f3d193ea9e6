#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rydelec::cli {

/// Process exit codes.
enum ExitCode : int {
  ok = 0,
  internal_error = 1,
  usage_error = 2,
  parse_error = 3,
  validation_error = 4,
  solver_error = 5,
  analysis_error = 6,
};

inline constexpr int manifest_schema_version = 1;

/// Environment variable naming the scheme file used when --scheme is absent.
inline constexpr const char* scheme_env = "RYDELEC_SCHEME";

/// Runs one command line (argv[0] is the program name). Data products go to files; a summary
/// JSON goes to `out`; usage text, warnings and machine-readable JSON diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace rydelec::cli
