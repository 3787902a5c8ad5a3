// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace adds {

/// Operand shapes do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value is out of range or inconsistent with another.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Bad caller-provided data (empty names, zero vectors, duplicates).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A serialized file is malformed, truncated or of an unsupported version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace adds
