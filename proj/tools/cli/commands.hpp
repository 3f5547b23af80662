#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rnoma/config.hpp"

namespace rnoma::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kUsageError = 2 };

// Process environment the CLI consults. Tests pass their own.
struct Environment {
  std::optional<std::string> seed;  // RNOMA_SEED

  static Environment current();
};

// Parses "key = value" lines; '#' starts a comment. Throws parameter_error on
// malformed lines or unknown keys.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Applies parsed config-file entries on top of `cfg`.
void apply_config_entries(SystemConfig& cfg, const std::map<std::string, std::string>& entries);

// Runs one CLI invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Environment& env = Environment::current());

}  // namespace rnoma::cli
