#pragma once

#include <stdexcept>
#include <string>

namespace fragtree {

/// Argument outside the mathematical domain of an operation (x <= 0 for logΓ, t < 1, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Structural input problems: malformed tree strings, infeasible count vectors,
/// bilabelled trees that violate the labelling invariants.
class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A requested computation exceeds its configured size or time budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Should never fire; indicates a bug (inexact division, failed bracket, ...).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fragtree
