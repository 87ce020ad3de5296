#ifndef BATCHLENS_ERRORS_HPP
#define BATCHLENS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace batchlens {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A projection or reference quantity that must be nonzero turned out to be zero.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidWindow : public Error {
 public:
  using Error::Error;
};

// Point supplied to a curvature routine is not in the global-minimum set.
class InvalidPoint : public Error {
 public:
  using Error::Error;
};

// A training run produced a non-finite coordinate.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(std::size_t step)
      : Error("non-finite state at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": size " + std::to_string(a) +
                         " does not match " + std::to_string(b));
  }
}

}  // namespace batchlens

#endif  // BATCHLENS_ERRORS_HPP
