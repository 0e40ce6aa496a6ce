#pragma once

#include <iosfwd>

namespace sac {

// Compact oracle/gradient suite for `sac selftest`. Prints one line per check;
// returns false if anything fails.
bool selftest(std::ostream& os);

}  // namespace sac
