#pragma once

#include <stdexcept>
#include <string>

namespace divsim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroVectorError : Error {
  ZeroVectorError() : Error("vector norm below 1e-12, cannot normalize") {}
};

struct DimensionMismatchError : Error {
  DimensionMismatchError(long expected, long actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(actual)) {}
};

struct EmptyGalleryError : Error {
  EmptyGalleryError() : Error("gallery database is empty") {}
};

struct EmptyReferenceSetError : Error {
  EmptyReferenceSetError() : Error("reference set is empty") {}
};

struct EmptyQuerySetError : Error {
  EmptyQuerySetError() : Error("query set is empty") {}
};

struct EmptyAuxPoolError : Error {
  EmptyAuxPoolError() : Error("auxiliary pool is empty") {}
};

struct ZeroTrackeeQueriesError : Error {
  ZeroTrackeeQueriesError() : Error("query set contains no trackee images") {}
};

struct InvalidConfigError : Error {
  explicit InvalidConfigError(const std::string& what)
      : Error("invalid config: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

struct ParseError : Error {
  ParseError(int line, const std::string& what)
      : Error("parse error at line " + std::to_string(line) + ": " + what),
        line_number(line) {}
  int line_number;
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

}  // namespace divsim
