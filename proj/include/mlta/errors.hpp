#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mlta {

/// Raised when every EM start fails to produce a finite likelihood.
class EstimationError : public std::runtime_error {
 public:
  EstimationError(const std::string& what, std::vector<std::string> diagnostics = {})
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

/// Requested work exceeds a configured resource cap (e.g. quadrature grid size).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file content. Carries 1-based row/column coordinates when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long row = -1, long column = -1)
      : std::runtime_error(what), row_(row), column_(column) {}

  long row() const noexcept { return row_; }
  long column() const noexcept { return column_; }

 private:
  long row_;
  long column_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlta
