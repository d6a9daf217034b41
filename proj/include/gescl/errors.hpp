// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gescl {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or parameter dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid architecture, hyperparameter or run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Bad argument values (labels out of range, empty datasets, unknown heads).
class InputError : public Error {
public:
    using Error::Error;
};

/// An operation was called in the wrong phase (empty tape, released split, ...).
class StateError : public Error {
public:
    using Error::Error;
};

/// Dataset files are missing, malformed, or inconsistent with the class grouping.
class IngestionError : public Error {
public:
    using Error::Error;
};

} // namespace gescl
