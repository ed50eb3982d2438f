#pragma once

#include <stdexcept>
#include <string>

namespace fedrlr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// The matrix handed to a rank-R projection has fewer than R significant
/// singular values.
class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, double sigma_r, double sigma_1)
      : Error(what), sigma_r_(sigma_r), sigma_1_(sigma_1) {}
  double sigma_r() const { return sigma_r_; }
  double sigma_1() const { return sigma_1_; }

 private:
  double sigma_r_;
  double sigma_1_;
};

class BatchTooLarge : public Error {
 public:
  using Error::Error;
};

class NumericalOverflow : public Error {
 public:
  using Error::Error;
};

class InvalidC1 : public Error {
 public:
  using Error::Error;
};

class TargetNotReached : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

/// Configuration validation failure; `path` is the offending key, e.g.
/// "schedule.penalty.c1".
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace fedrlr
