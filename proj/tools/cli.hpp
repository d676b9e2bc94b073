// Command-line front end. Exit codes: 0 success, 2 validation, 3 fit failure,
// 4 empty key subset, 5 gradient-check failure.
#pragma once

#include <iosfwd>

namespace ezgp {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitValidation = 2,
  kExitFit = 3,
  kExitEmptySubset = 4,
  kExitGradient = 5,
};

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ezgp
