#pragma once

#include <stdexcept>
#include <string>

namespace siamreid {

// Raised when a caller violates an operation's preconditions (shapes, ranges).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dataset ingestion failures: unreadable files, bad names, empty directories.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The pair sampler cannot satisfy the requested batch composition.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation protocol cannot be built (identity missing a camera, query absent from gallery).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad key, bad value or unreadable config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace siamreid
