#pragma once

#include <stdexcept>
#include <string>

namespace viba {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file. Carries a 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Violated precondition on otherwise well-formed data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The victim failed to produce a prediction (crash, refusal, timeout).
class VictimError : public Error {
 public:
  using Error::Error;
};

/// The external adapter broke the wire protocol.
class ProtocolError : public VictimError {
 public:
  using VictimError::VictimError;
};

/// An operation required a victim capability that is not available.
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& capability)
      : Error("victim does not support required capability: " + capability),
        capability_(capability) {}
  const std::string& capability() const noexcept { return capability_; }

 private:
  std::string capability_;
};

/// Model file could not be read back.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace viba
