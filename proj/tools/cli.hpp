#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace synomaly::cli {

enum ExitCode
{
  ok = 0,
  failure = 1,
  bad_config = 2,
  missing_file = 3,
  bad_format = 4
};

/// Runs one subcommand; args excludes the program name.
int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err);

} // namespace synomaly::cli
