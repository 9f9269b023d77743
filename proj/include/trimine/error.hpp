#pragma once

#include <stdexcept>
#include <string>

namespace trimine {

// Base of every error thrown by the library. The CLI maps these to a
// structured stderr line and a nonzero exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class ParseError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "parse"; }
};

class JoinError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "join"; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "validation"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
};

class NonFiniteError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "non_finite"; }
};

} // namespace trimine
