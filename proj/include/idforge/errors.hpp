#pragma once

#include <stdexcept>
#include <string>

namespace idforge {

// Base class for all library errors. Subtypes mirror the failure categories
// raised at module boundaries so callers can catch selectively.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

// Bad scalar/range arguments (negative std, sigma <= 0, empty batch, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Unknown identity label or label outside an embedding table.
struct LabelError : Error {
    using Error::Error;
};

// A computation produced (or was handed) a non-finite value.
struct NumericError : Error {
    using Error::Error;
};

// Stale tape, schedule mismatch: objects combined across incompatible states.
struct StateError : Error {
    using Error::Error;
};

// World generation could not satisfy its invariants.
struct GenerationError : Error {
    using Error::Error;
};

// A training loop diverged.
struct TrainingError : Error {
    using Error::Error;
};

// Evaluation protocol violated (seen/novel label overlap).
struct ProtocolError : Error {
    using Error::Error;
};

// Report generation hit a corrupt or missing input file.
struct ReportError : Error {
    using Error::Error;
};

// File IO failure.
struct IoError : Error {
    using Error::Error;
};

// CLI-level misuse: missing inputs, unknown config keys, bad flag values.
struct UsageError : Error {
    using Error::Error;
};

} // namespace idforge
