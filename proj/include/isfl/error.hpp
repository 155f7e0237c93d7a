#pragma once

#include <stdexcept>
#include <string>

namespace isfl {

/// Invalid configuration or dimension mismatch between collaborating values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An operation was called with arguments outside its contract (empty batch, empty pool).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during optimization or evaluation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every attribution component was zero, so proportional normalization is undefined.
class DegenerateAttributionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file does not follow the expected column layout.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row) : std::runtime_error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure inside a federation round, annotated with where it happened.
class RoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace isfl
