#pragma once

#include <stdexcept>
#include <string>

namespace pbda {

// Malformed input file (CSV/JSON); message carries row/column context.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimizer produced a non-finite loss or gradient on every restart.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An identity that must hold exactly (up to float tolerance) failed.
class DualPathMismatch : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A posterior was assembled against a prior that saw the target sample.
class IllegalPrior : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace pbda
