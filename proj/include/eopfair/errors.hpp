#pragma once

#include <stdexcept>
#include <string>

namespace eopfair {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or malformed dataset column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A single dataset record could not be parsed.
class RecordError : public Error {
 public:
  RecordError(std::size_t row, const std::string& what)
      : Error("record " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Argument outside the domain of a mathematical function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector or row lengths disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class IncompleteDataError : public Error {
 public:
  using Error::Error;
};

class SamplingExhaustedError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class EmptyStudyError : public Error {
 public:
  using Error::Error;
};

}  // namespace eopfair
