#pragma once

#include <vector>

#include "specpoint/matrix.hpp"

namespace specpoint::linalg {

/// Result of a symmetric eigendecomposition. Column j of `vectors` pairs with
/// `values[j]`; values are non-decreasing and every column is sign-canonicalized:
/// its largest-magnitude entry (ties resolved to the lowest index) is non-negative.
struct EighResult {
    std::vector<double> values;
    Matrix vectors;
};

/// Symmetric eigendecomposition by cyclic Jacobi sweeps.
///
/// `a` must be square and symmetric to within 1e-9 relative to its largest
/// entry; it is symmetrized by averaging before iterating. Sweeps run until the
/// largest off-diagonal magnitude drops below 1e-12 times the largest input
/// magnitude, capped at 64 sweeps.
///
/// Throws ConfigError for shape or symmetry violations and NumericalError,
/// reporting the residual, if the cap is hit.
EighResult jacobi_eigh(const Matrix& a);

} // namespace specpoint::linalg
