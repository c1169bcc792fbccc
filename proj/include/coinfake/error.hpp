#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coinfake {

/// Bad user input: unreadable files, malformed configs, violated preconditions
/// on data supplied from outside the library.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, std::size_t column,
             const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ":" +
                   std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

/// A computation reached a state it cannot continue from, e.g. a sequence with
/// zero probability under a model or a particle population with no weight.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coinfake
