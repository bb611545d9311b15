#ifndef BEASTPIPE_ERRORS_HPP_
#define BEASTPIPE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace beastpipe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dtype disagreement between arrays.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A TrainingBatch or Rollout violates the learner input contract.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// NaN or Inf reached a place where training must stop.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// A queue or batcher was closed; producers and consumers treat this as a
// shutdown signal.
class ClosedError : public Error {
 public:
  ClosedError() : Error("closed") {}
};

class InvalidActionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConnectError : public Error {
 public:
  using Error::Error;
};

}  // namespace beastpipe

#endif  // BEASTPIPE_ERRORS_HPP_
