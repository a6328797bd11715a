#pragma once

#include <stdexcept>
#include <string>

namespace msw {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration that violates a structural constraint (divisibility,
// ranges). Raised before any compute happens.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files and records.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, counter overflow, diverging training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autograd graph (double backward, detached loss).
class GraphError : public Error {
 public:
  using Error::Error;
};

// A metric with no valid unit to average over.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace msw
