#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace riskcal {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (bad k, alpha out of range, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

// An object was used before it was fitted.
class InvalidState : public Error {
public:
    using Error::Error;
};

// Data passed syntactic parsing but violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace riskcal
