#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rerand {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Covariance matrix is not positive definite.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, std::vector<int> columns)
      : Error(what), columns_(std::move(columns)) {}
  const std::vector<int>& columns() const noexcept { return columns_; }

 private:
  std::vector<int> columns_;
};

/// Regression design lacks full column rank.
class CollinearityError : public Error {
 public:
  CollinearityError(const std::string& what, std::vector<int> columns)
      : Error(what), columns_(std::move(columns)) {}
  const std::vector<int>& columns() const noexcept { return columns_; }

 private:
  std::vector<int> columns_;
};

/// Some observation has leverage one, so HC2/HC3 weights are undefined.
class LeverageError : public Error {
 public:
  using Error::Error;
};

/// Rerandomization gave up before any allocation met the balance threshold.
class AcceptanceFailure : public Error {
 public:
  AcceptanceFailure(const std::string& what, double smallest_distance, long tries)
      : Error(what), smallest_distance_(smallest_distance), tries_(tries) {}
  double smallest_distance() const noexcept { return smallest_distance_; }
  long tries() const noexcept { return tries_; }

 private:
  double smallest_distance_;
  long tries_;
};

/// Combinatorial or sample-size guard exceeded.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// A treatment arm is empty or too small for the requested computation.
class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Result records do not form a complete balanced factorial grid.
class BalanceError : public Error {
 public:
  using Error::Error;
};

/// Neyman baseline records are missing.
class BaselineError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration key, value, or flag.
class UsageError : public Error {
 public:
  UsageError(const std::string& what, std::string key = {})
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace rerand
