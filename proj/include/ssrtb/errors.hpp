#pragma once

#include <stdexcept>
#include <string>

namespace ssrtb {

// Base for everything thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad values in a config file or in derived configuration (e.g. non-positive
// feature normalizer).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class CheckpointCorruptError : public Error {
public:
    using Error::Error;
};

class CheckpointVersionError : public Error {
public:
    using Error::Error;
};

} // namespace ssrtb
