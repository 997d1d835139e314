#pragma once

#include <stdexcept>
#include <string>

namespace hsboltz {

/// Input rejected before any work was done (maps to exit code 2).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown: blow-up, failed eigensolve, non-positive gap (exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Requested problem exceeds a configured memory or work budget (exit code 4).
struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Work and memory guards shared by the heavy operators.
struct Budget {
    /// Upper bound on n_v^3 * n_angular for on-the-fly collision quadrature.
    double max_collision_work = 2.0e5;
    /// Upper bound on bytes for any single dense operator.
    double max_dense_bytes = 2.0e9;
};

}  // namespace hsboltz
