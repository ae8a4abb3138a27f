#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bgt {

// Bad index, empty input or violated precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Model or transform parameters outside their admissible range.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside the domain of a utility function (e.g. log of a
// non-positive demand).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidPrice : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NoEquilibrium : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-point iteration did not reach tolerance. Carries the last iterate
// (one strategy per player) and its residual.
class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(const std::string& what,
                     std::vector<std::vector<double>> last_iterate,
                     double residual)
      : std::runtime_error(what),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}

  const std::vector<std::vector<double>>& last_iterate() const noexcept {
    return last_iterate_;
  }
  double residual() const noexcept { return residual_; }

 private:
  std::vector<std::vector<double>> last_iterate_;
  double residual_;
};

// Malformed input document. key() names the offending key when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string key = {})
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& what, std::string key = {})
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace bgt
