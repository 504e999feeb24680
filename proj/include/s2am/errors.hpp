#pragma once

#include <stdexcept>

namespace s2am {

/// Invalid or inconsistent configuration (bad sizes, flags that cannot be combined).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that cannot be used: non-finite values, unreadable or mismatched files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shapes, resolutions, call order).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Wrong usage from the command line or an API entry point used on the wrong model kind.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A pipeline finished without producing anything.
class EmptyResultError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace s2am
