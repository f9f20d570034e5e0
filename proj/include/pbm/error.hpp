#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pbm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model invariant does not hold or a catalog reference does not resolve.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Syntax or semantic error in a policy document. Line and column are
/// 1-based byte positions into the parsed text.
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, std::string message, std::string snippet);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }
    const std::string& snippet() const noexcept { return snippet_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string message_;
    std::string snippet_;
};

class StrategyLimitError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Repository lookups: unknown version, checksum mismatch, bad manifest.
class RepoError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    enum class Kind { BadMagic, UnsupportedVersion, UnknownKind, Truncated, LengthOverflow, MalformedPayload };

    ProtocolError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace pbm
