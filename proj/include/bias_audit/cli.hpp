#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace bias_audit::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Runs one command line (argv[0] is the program name). Diagnostics go to `err`,
/// stdout-bound results to `out`.
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes. Throws IoError.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace bias_audit::cli
