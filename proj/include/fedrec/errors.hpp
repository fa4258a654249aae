#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedrec {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class NoNegativesError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a client cannot take part in a round (e.g. no train items).
class SkipClient : public Error {
 public:
  using Error::Error;
};

/// Local training produced a non-finite loss.
class ClientAbortError : public Error {
 public:
  ClientAbortError(int round, std::size_t user, const std::string& what);
  int round() const { return round_; }
  std::size_t user() const { return user_; }

 private:
  int round_;
  std::size_t user_;
};

}  // namespace fedrec
