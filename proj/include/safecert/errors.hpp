#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace safecert {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression, predicate or problem file. Positions are 1-based;
/// line is 0 when the text being parsed is a single expression.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(format(what, line, column)), line_(line), column_(column), message_(what) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }

    ParseError at_line(std::size_t line, std::size_t column_offset) const {
        return ParseError(message_, line, column_ + column_offset);
    }

private:
    static std::string format(const std::string& what, std::size_t line, std::size_t column) {
        std::string s;
        if (line > 0) s += "line " + std::to_string(line) + ", ";
        s += "column " + std::to_string(column) + ": " + what;
        return s;
    }

    std::size_t line_;
    std::size_t column_;
    std::string message_;
};

/// A syntactically valid problem that violates a semantic invariant.
class ProblemError : public Error {
public:
    using Error::Error;
};

/// Raised when a construction stage (exit time, mollification, assembly) cannot
/// produce a valid object. `stage()` names the failing stage for reports.
class ConstructionError : public Error {
public:
    ConstructionError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace safecert
