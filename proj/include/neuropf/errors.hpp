#pragma once

#include <stdexcept>
#include <string>

namespace neuropf {

/// Malformed input text (case file, CSV, checkpoint).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input parsed but violates a model invariant (duplicate bus, slack count, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Native JSON document does not conform to the schema. `path()` is a JSON
/// pointer to the offending location.
class SchemaError : public ValidationError {
 public:
  SchemaError(std::string path, const std::string& what)
      : ValidationError("schema error at \"" + path + "\": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Numerical failure that aborts an algorithm (non-finite loss/gradient, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace neuropf
