#pragma once

#include <stdexcept>
#include <string>

namespace braess {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (files, parameters, preconditions).
struct InputError : Error {
  using Error::Error;
};

/// A removal would leave an OD pair with no route.
struct ConnectivityViolation : Error {
  using Error::Error;
};

/// A route traverses an interior node with no intersection record.
struct MissingIntersectionData : Error {
  using Error::Error;
};

/// An OD pair has positive demand but no route.
struct NoRouteForDemand : Error {
  using Error::Error;
};

/// Too few / too poorly spread samples for a fit.
struct InsufficientData : Error {
  using Error::Error;
};

/// Combinatorial enumeration would exceed the configured solve budget.
struct BudgetExceeded : Error {
  using Error::Error;
};

}  // namespace braess
