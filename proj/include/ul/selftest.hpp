#pragma once

#include <ostream>

namespace ul {

// Quick gradient and oracle suite behind the `selftest` subcommand.
// Prints one PASS/FAIL line per check; returns true iff all pass.
bool run_selftest(std::ostream& out);

}  // namespace ul
