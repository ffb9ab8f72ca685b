#pragma once

#include <stdexcept>
#include <string>

namespace xmamba {

// Base class for everything this library throws on contract violations.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

// Width (channel) disagreement between the two branches at the fusion seam.
class WidthMismatchError : public ShapeMismatchError {
 public:
  using ShapeMismatchError::ShapeMismatchError;
};

// NaN/Inf was about to be stored in a tensor.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class NotScalarError : public Error {
 public:
  using Error::Error;
};

// Backward requested through a graph that was already consumed (or never
// recorded).
class TapeConsumedError : public Error {
 public:
  using Error::Error;
};

// A finite-difference probe evaluated to NaN/Inf.
class NonFiniteProbeError : public Error {
 public:
  using Error::Error;
};

class EmptySequenceError : public Error {
 public:
  using Error::Error;
};

class MissingBaselineError : public Error {
 public:
  using Error::Error;
};

// Training loss went non-finite; message carries the offending epoch/step.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace xmamba
