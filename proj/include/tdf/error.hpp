#pragma once

#include <stdexcept>
#include <string>

namespace tdf {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  Input,        // malformed or missing input data (exit 2)
  Schema,       // wrong columns / file layout (exit 2)
  Validation,   // values outside their domain (exit 2)
  EmptyResult,  // an operation produced nothing usable (exit 3)
  Numerical,    // estimation or linear algebra failure (exit 4)
  Internal      // everything else (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row = -1)
      : Error(ErrorKind::Input, row >= 0 ? "row " + std::to_string(row) + ": " + what : what),
        row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorKind::Schema, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class EmptyResultError : public Error {
 public:
  explicit EmptyResultError(const std::string& what) : Error(ErrorKind::EmptyResult, what) {}
};

/// Rethrows `e` with `prefix` prepended, keeping its concrete class.
[[noreturn]] inline void rethrow_with_prefix(const Error& e, const std::string& prefix) {
  const std::string msg = prefix + e.what();
  switch (e.kind()) {
    case ErrorKind::Schema: throw SchemaError(msg);
    case ErrorKind::Validation: throw ValidationError(msg);
    case ErrorKind::Numerical: throw NumericalError(msg);
    case ErrorKind::EmptyResult: throw EmptyResultError(msg);
    default: throw Error(e.kind(), msg);
  }
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace tdf
