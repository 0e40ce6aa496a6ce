#pragma once

// Scalar type for all tensor math. Double precision is the default and is
// what the test tolerances assume; single precision is an opt-in speed mode
// (configure with -DSAC_SINGLE_PRECISION=ON).
namespace sac {

#ifdef SAC_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

}  // namespace sac
