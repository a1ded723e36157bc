#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hobj {

/// Shape or axis mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid construction parameter (odd/even extents, chunk sizes, indivisible sizes).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Value outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Misuse of the differentiation graph (non-scalar loss, double backward).
class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// NaN/Inf or divergence detected during training or evaluation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure (missing file, unwritable path).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file content; carries the byte offset where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset)
    {
    }

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Checkpoint truncated or inconsistent with its own manifest.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint manifest does not match the model it is loaded into.
class VersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hobj
