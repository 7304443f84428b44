#pragma once

#include <stdexcept>
#include <string>

namespace feedcap {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file or json payload.
struct ParseError : Error {
    using Error::Error;
};

// Data fails a construction invariant (row sums, negative mass, shape mismatch).
struct ValidationError : Error {
    using Error::Error;
};

// A declared structure flag fails its check; message names the counterexample.
struct FlagCheckError : Error {
    using Error::Error;
};

// An operation needs a structure flag the spec does not declare.
struct FlagUnsupported : Error {
    using Error::Error;
};

// Operation and spec kind (or solver case) do not match.
struct CaseMismatch : Error {
    using Error::Error;
};

// Enumeration or table size above the configured cap.
struct CapExceeded : Error {
    using Error::Error;
};

// Filter conditioned on an observation with zero predictive mass.
struct ZeroProbabilityObservation : Error {
    using Error::Error;
};

// Density requested at a zero-mass cell of a joint measure.
struct ZeroMassCell : Error {
    using Error::Error;
};

// Two formulas that must agree to working precision did not.
struct InternalDisagreement : Error {
    using Error::Error;
};

// Iterative solver hit its iteration cap before reaching tolerance.
struct NotConverged : Error {
    using Error::Error;
};

// State chain has more than one recurrent class.
struct NotErgodic : Error {
    using Error::Error;
};

} // namespace feedcap
