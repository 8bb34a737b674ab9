#pragma once

#include <stdexcept>
#include <string>

namespace graphcount {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/matrix dimension disagreement. Message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Bad configuration value (file-level or programmatic).
struct ConfigError : Error {
    using Error::Error;
};

// API misuse: non-scalar backward seed, missing gradient, empty metric lists.
struct UsageError : Error {
    using Error::Error;
};

// Bad runtime input data (out-of-bounds annotation point, wrong image dims).
struct InputError : Error {
    using Error::Error;
};

// Checkpoint file unreadable, malformed, or config-hash mismatch.
struct CheckpointError : Error {
    using Error::Error;
};

// A guaranteed internal invariant broke; indicates a bug, not user error.
struct InternalError : Error {
    using Error::Error;
};

}  // namespace graphcount
