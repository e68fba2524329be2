#pragma once

#include <stdexcept>
#include <string>

namespace pbu {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/parameter dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Violated precondition or domain invariant (empty dataset, multi-class
// forget set, contaminated retain set, ...).
struct ContractError : Error {
    using Error::Error;
};

// Malformed file contents (checkpoints, fisher files, CSV, JSON configs).
struct ParseError : Error {
    using Error::Error;
};

// File system problems distinct from malformed contents.
struct IoError : Error {
    using Error::Error;
};

// Non-finite or runaway values during optimization. Maps to exit code 2
// in the CLI.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace pbu
