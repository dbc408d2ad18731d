#pragma once

#include <stdexcept>
#include <string>

namespace setgan {

// Operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A documented precondition or usage protocol was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A computation produced a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace setgan
