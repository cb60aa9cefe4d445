#pragma once

#include <stdexcept>
#include <string>

namespace chartrl {

/// Script is not tokenizable under the plotting dialect (unbalanced
/// brackets, unterminated string literal).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Bad input or configuration supplied by the caller. Maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An external dependency (renderer, judge endpoint) could not be reached.
/// Maps to exit code 3.
class InfrastructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class JudgeUnavailable : public InfrastructureError {
 public:
  using InfrastructureError::InfrastructureError;
};

class RendererUnavailable : public InfrastructureError {
 public:
  using InfrastructureError::InfrastructureError;
};

class MalformedVerdict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chartrl
