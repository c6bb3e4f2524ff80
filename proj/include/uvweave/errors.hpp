#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uvweave {

// Bad input: wrong sizes, malformed files, stages run out of order. CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file content; `offset` is the byte where parsing stopped.
class FormatError : public ValidationError {
public:
    FormatError(const std::string& what, std::size_t offset)
        : ValidationError(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Numerical failure: divergence, degenerate geometry. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace uvweave
