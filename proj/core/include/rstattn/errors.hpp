#ifndef RSTATTN_ERRORS_HPP
#define RSTATTN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rstattn {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input that could not be read at all (bad JSON, bad container).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Well-formed input whose content violates a documented invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// API misuse: a precondition the caller was responsible for does not hold.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Unreadable or inconsistent serialized model state.
class CheckpointError : public Error {
public:
  using Error::Error;
};

}  // namespace rstattn

#endif
