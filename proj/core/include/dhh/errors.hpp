#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dhh {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid lattice geometry or mismatched shapes.
class GridError : public Error {
 public:
  using Error::Error;
};

/// State with zero total weight where a normalizable one is required.
class DegenerateStateError : public Error {
 public:
  using Error::Error;
};

/// Grid or basis too coarse or too small for the requested operation.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Time step violates the integrator's stability bound.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced during integration.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Input series unsuitable for a least-squares fit.
class FitQualityError : public Error {
 public:
  using Error::Error;
};

/// Relative fluctuation requested for a bin with zero mass.
class UndefinedFluctuationError : public Error {
 public:
  using Error::Error;
};

/// Exact enumeration requested beyond the configured cap.
class EnumerationCapError : public Error {
 public:
  using Error::Error;
};

/// Hilbert-space dimension exceeds the dense linear-algebra cap.
class DimensionCapError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration text.
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Well-formed configuration with an invalid field value.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string field, const std::string& what);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-fatal findings collected by operations that accept an optional sink.
struct Diagnostics {
  std::vector<std::string> warnings;
  std::vector<std::string> notes;

  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
  void note(std::string msg) { notes.push_back(std::move(msg)); }
};

inline void warn(Diagnostics* d, std::string msg) {
  if (d) d->warn(std::move(msg));
}
inline void note(Diagnostics* d, std::string msg) {
  if (d) d->note(std::move(msg));
}

}  // namespace dhh
