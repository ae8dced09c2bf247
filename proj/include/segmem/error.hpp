#pragma once

#include <stdexcept>
#include <string>

namespace segmem {

// Input files that cannot be decoded. Carries the 1-based line number when
// the failure is tied to a specific line of a JSON Lines file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A structurally valid value violating a domain invariant.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model output that does not follow the requested format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric whose definition does not apply to the given inputs.
class MetricUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace segmem
