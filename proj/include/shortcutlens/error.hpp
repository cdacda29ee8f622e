#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shortcutlens {

/// Base for every failure the engine reports.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input; `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Well-formed input that names something that does not exist or collides.
class ReferenceError : public Error {
public:
  ReferenceError(const std::string& what, std::string name)
      : Error(what + ": " + name), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

private:
  std::string name_;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace shortcutlens
