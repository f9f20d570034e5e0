#include "pbm/error.hpp"

namespace pbm {

ParseError::ParseError(std::size_t line, std::size_t column, std::string message, std::string snippet)
    : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      message_(std::move(message)),
      snippet_(std::move(snippet)) {}

}  // namespace pbm
