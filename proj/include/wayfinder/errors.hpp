#pragma once

#include <stdexcept>
#include <string>

namespace wayfinder {

/// Base for every data-level failure raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedMap : public Error {
 public:
  using Error::Error;
};

class UnreachableGoal : public Error {
 public:
  using Error::Error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(int line, int col, std::string message)
      : Error(std::to_string(line) + ":" + std::to_string(col) + ": " + message),
        line_(line),
        col_(col),
        detail_(std::move(message)) {}

  int line() const { return line_; }
  int col() const { return col_; }
  const std::string& detail() const { return detail_; }

 private:
  int line_;
  int col_;
  std::string detail_;
};

class EmptyProgram : public Error {
 public:
  EmptyProgram() : Error("program contains no statements") {}
};

/// Remote translator or actor could not be reached after the retry budget.
class RemoteUnavailable : public Error {
 public:
  using Error::Error;
};

class InconsistentObservation : public Error {
 public:
  using Error::Error;
};

class NoLegalAction : public Error {
 public:
  using Error::Error;
};

class TooFewExplanations : public Error {
 public:
  using Error::Error;
};

class UnknownMapReference : public Error {
 public:
  using Error::Error;
};

}  // namespace wayfinder
