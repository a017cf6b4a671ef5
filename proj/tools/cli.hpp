#pragma once

#include <string>
#include <vector>

namespace mcal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

/// Version of the report.json layout. Bump it whenever a field changes.
inline constexpr int kSchemaVersion = 1;

/// Parses and runs one command; returns the process exit status. Errors are
/// printed to stderr as "error: <message>".
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

} // namespace mcal::cli
