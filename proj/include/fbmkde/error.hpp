#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fbmkde {

//! Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

//! Circulant embedding produced an eigenvalue below the tolerance.
class NegativeEigenvalue : public Error {
public:
  explicit NegativeEigenvalue(double min_eig)
      : Error("circulant embedding has negative eigenvalue " + std::to_string(min_eig)),
        min_eig_(min_eig) {}
  double min_eig() const noexcept { return min_eig_; }

private:
  double min_eig_;
};

class NotPositiveDefinite : public Error {
public:
  using Error::Error;
};

//! A simulated state left the finite range.
class NonFinite : public Error {
public:
  explicit NonFinite(std::size_t step)
      : Error("non-finite state at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

class UnknownDrift : public Error {
public:
  using Error::Error;
};

class EmptyTrajectory : public Error {
public:
  EmptyTrajectory() : Error("trajectory has no samples") {}
};

class InvalidRegime : public Error {
public:
  using Error::Error;
};

class InsufficientPoints : public Error {
public:
  using Error::Error;
};

class NonPositiveValue : public Error {
public:
  using Error::Error;
};

class Nonconvergence : public Error {
public:
  using Error::Error;
};

class BudgetTooSmall : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace fbmkde
