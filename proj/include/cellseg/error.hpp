#pragma once

#include <stdexcept>
#include <string>

namespace cellseg {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, mismatched volumes, degenerate content.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Parameter outside its documented domain (caller error).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Wraps a failure raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, bool data_error)
      : Error(stage + ": " + what), stage_(std::move(stage)), data_error_(data_error) {}

  const std::string& stage() const noexcept { return stage_; }
  bool is_data_error() const noexcept { return data_error_; }

 private:
  std::string stage_;
  bool data_error_;
};

}  // namespace cellseg
