#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hybrank {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line (or record) number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    explicit ParseError(const std::string& what) : Error(what) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

/// A referenced id (document, query, embedding row) could not be resolved.
class LookupError : public Error {
public:
    LookupError(const std::string& kind, const std::string& id)
        : Error("unknown " + kind + " id '" + id + "'"), id_(id) {}

    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

/// Tensor shape or configuration mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

}  // namespace hybrank
