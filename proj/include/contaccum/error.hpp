// Copyright 2026 The ContAccum Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace contaccum {

// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf where a finite value is required.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Operation called in a state that does not allow it (no tape, bank re-enable, ...).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Invalid configuration value; key() names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace contaccum
