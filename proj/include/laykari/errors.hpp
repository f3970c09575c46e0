// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace laykari {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// File exists but its contents do not match the expected format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Inputs violate a documented precondition or schema rule.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A configuration struct is internally inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace laykari
