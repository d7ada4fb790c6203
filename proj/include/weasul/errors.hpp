#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace weasul {

enum class ErrorKind {
    InvalidArgument,
    DimensionMismatch,
    NumericallySingular,
    NonFinite,
    UnknownPoint,
    Exhausted,
    EmptyInput,
    ParseError,
    SchemaError,
    OracleFailure,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Raised by the table reader; row is 1-based over data rows (header excluded).
class ParseError : public Error {
public:
    ParseError(std::size_t row, std::string column, const std::string& reason);

    [[nodiscard]] std::size_t row() const noexcept { return row_; }
    [[nodiscard]] const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

}  // namespace weasul
