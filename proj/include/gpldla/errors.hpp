#pragma once

#include <stdexcept>
#include <string>

namespace gpldla {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an operation (empty reductions etc).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Violated precondition of a public operation.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Failure of a numerical routine (non-PD matrix, non-finite value).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough classes or samples to build the requested episode.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpldla
