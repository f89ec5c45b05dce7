#pragma once

#include <stdexcept>
#include <string>

namespace setctl {

// Arithmetic outside an operation's domain (ln of x <= 0, division by a
// zero-containing interval, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Validated integration could not find an a-priori enclosure; the caller
// is expected to retry with a smaller step.
class StepRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MetzlerViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace setctl
