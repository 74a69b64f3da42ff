#pragma once

#include <cstdio>

namespace dqmp::tool {

/// Special-function identities, KVFD branch continuity, network gradient
/// checks and reward/Q arithmetic. Prints one line per check; returns the
/// number of failures.
int run_selftest(std::FILE* out);

}  // namespace dqmp::tool
