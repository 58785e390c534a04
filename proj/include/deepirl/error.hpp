#pragma once

#include <stdexcept>
#include <string>

namespace deepirl {

/// Malformed input data, missing files, manifest mismatches.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or broken numerical invariants during a solve or a
/// training step.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace deepirl
