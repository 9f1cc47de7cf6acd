#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tps {

/// Point set does not determine a unique polynomial of degree < m.
class UnisolvencyError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Two design points coincide; rows are zero-based.
class DuplicatePointsError : public std::invalid_argument {
public:
  DuplicatePointsError(std::size_t first, std::size_t second)
    : std::invalid_argument("duplicate design points at rows " + std::to_string(first) +
                            " and " + std::to_string(second)),
      first_(first), second_(second) {}

  std::size_t first() const { return first_; }
  std::size_t second() const { return second_; }

private:
  std::size_t first_;
  std::size_t second_;
};

class UnsupportedDerivativeError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Bordered system stayed singular after the ridge retry.
class SingularSystemError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class RootFindingError : public std::runtime_error {
public:
  RootFindingError(const std::string& what, double lo, double hi)
    : std::runtime_error(what + " (bracket [" + std::to_string(lo) + ", " + std::to_string(hi) + "])"),
      lo_(lo), hi_(hi) {}

  double bracket_lo() const { return lo_; }
  double bracket_hi() const { return hi_; }

private:
  double lo_;
  double hi_;
};

/// Malformed model document. `field()` names the offending entry.
class FormatError : public std::runtime_error {
public:
  FormatError(std::string field, const std::string& what)
    : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

private:
  std::string field_;
};

class VersionError : public FormatError {
public:
  explicit VersionError(const std::string& found)
    : FormatError("version", "unsupported model version '" + found + "'") {}
};

}  // namespace tps
