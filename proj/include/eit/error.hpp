#pragma once

#include <stdexcept>
#include <string>

namespace eit {

/// Invalid user-supplied parameters (mesh spec, pattern set, run config).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mesh connectivity or geometry that violates a structural invariant.
class TopologyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Factorization failure, non-finite loss, NaN gradients.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An API used out of order, e.g. a backward pass without its forward cache.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Unreadable or malformed input file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace eit
