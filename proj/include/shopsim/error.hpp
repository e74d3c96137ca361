#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shopsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A lookup by id failed. `id()` names what was asked for.
class NotFoundError : public Error {
 public:
  NotFoundError(std::string what_kind, std::string id)
      : Error(what_kind + " not found: " + id), kind_(std::move(what_kind)), id_(std::move(id)) {}
  const std::string& kind() const noexcept { return kind_; }
  const std::string& id() const noexcept { return id_; }

 private:
  std::string kind_;
  std::string id_;
};

/// Invalid input data. Carries the offending line (1-based, 0 when not
/// file-backed) and field name when known.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message, std::size_t line = 0, std::string field = {})
      : Error(format(message, line, field)), message_(message), line_(line), field_(std::move(field)) {}
  /// The message without the line/field prefix.
  const std::string& message() const noexcept { return message_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string message_;
  static std::string format(const std::string& message, std::size_t line, const std::string& field) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }
  std::size_t line_;
  std::string field_;
};

/// Agent output could not be parsed, or an action is illegal for the
/// scenario (e.g. ask_shopper in a single-turn episode).
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& message, std::string raw = {})
      : Error(message), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Operation not valid in the current state (stepping a finished episode,
/// page out of range, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

/// Chat-completion backend failures.
class BackendError : public Error {
 public:
  enum class Kind { Unreachable, Timeout, HttpStatus, MalformedCompletion };
  BackendError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace shopsim
