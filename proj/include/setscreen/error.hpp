#pragma once

#include <stdexcept>
#include <string>

namespace setscreen {

/// Broad failure classes; each maps to one CLI exit code.
enum class ErrorClass { Validation = 1, Numerical = 2, IO = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string name, const std::string& what)
      : std::runtime_error(what), cls_(cls), name_(std::move(name)) {}

  ErrorClass error_class() const noexcept { return cls_; }
  /// Short machine-readable tag, e.g. "RankDeficient".
  const std::string& name() const noexcept { return name_; }

 private:
  ErrorClass cls_;
  std::string name_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what, std::string name = "ValidationError")
      : Error(ErrorClass::Validation, std::move(name), what) {}
};

struct IOError : Error {
  explicit IOError(const std::string& what) : Error(ErrorClass::IO, "IOError", what) {}
};

struct NumericalError : Error {
  NumericalError(std::string name, const std::string& what)
      : Error(ErrorClass::Numerical, std::move(name), what) {}
};

struct RankDeficient : NumericalError {
  explicit RankDeficient(const std::string& what) : NumericalError("RankDeficient", what) {}
};

struct NonConvergence : NumericalError {
  explicit NonConvergence(const std::string& what) : NumericalError("NonConvergence", what) {}
};

struct Separation : NumericalError {
  explicit Separation(const std::string& what) : NumericalError("Separation", what) {}
};

struct DegenerateWeights : NumericalError {
  explicit DegenerateWeights(const std::string& what)
      : NumericalError("DegenerateWeights", what) {}
};

struct NoData : Error {
  explicit NoData(const std::string& what) : Error(ErrorClass::Validation, "NoData", what) {}
};

}  // namespace setscreen
