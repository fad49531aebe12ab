#pragma once

#include <stdexcept>
#include <string>

namespace ebbeam {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public PreconditionViolation {
 public:
  using PreconditionViolation::PreconditionViolation;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// controller
class SingularResolvent : public Error {
 public:
  using Error::Error;
};
class NotSpr : public Error {
 public:
  using Error::Error;
};
class NoCertificateFound : public Error {
 public:
  using Error::Error;
};
class MissingCertificate : public Error {
 public:
  using Error::Error;
};

// fem
class QuadratureDegreeTooLow : public Error {
 public:
  QuadratureDegreeTooLow(const std::string& what, int required_points)
      : Error(what), required_points_(required_points) {}
  int required_points() const noexcept { return required_points_; }

 private:
  int required_points_;
};

// stepper
class SingularSystem : public Error {
 public:
  using Error::Error;
};
class NonFiniteState : public Error {
 public:
  using Error::Error;
};

// spectral
class NoConvergence : public Error {
 public:
  using Error::Error;
};
class DuplicateRoot : public Error {
 public:
  using Error::Error;
};
class EigensolverFailure : public Error {
 public:
  using Error::Error;
};

// harness
class MeshMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace ebbeam
