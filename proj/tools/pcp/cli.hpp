#pragma once

#include <iosfwd>

#include "pcp/session.hpp"

namespace pcp::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitDiscoveryTimeout = 3,
  kExitAuthExhausted = 4,
  kExitRejected = 5,
  kExitIo = 6,
  kExitInterrupted = 7,
};

int exit_code_for(SessionStatus status);

/// Entry point behind `pcp`. Output goes to out, diagnostics and progress to err.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pcp::cli
