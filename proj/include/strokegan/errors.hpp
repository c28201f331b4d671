#ifndef STROKEGAN_ERRORS_HPP
#define STROKEGAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace strokegan {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension disagreement between operands.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Value outside the mathematical domain of an operation (log of <= 0, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// API misuse: violated precondition that is not a shape issue.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Bad config file, bad CLI arguments, bad manifest.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File system / serialization failures (corrupt checkpoint, bad PNG, ...).
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Training diverged (non-finite loss or gradient).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace strokegan

#endif
