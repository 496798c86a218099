#ifndef UCAN_SVD_HPP
#define UCAN_SVD_HPP

#include <vector>

#include "ucan/tensor.hpp"

namespace ucan {

// Singular values of a dense matrix by Jacobi iteration (Hestenes one-sided
// form: plane rotations orthogonalise the columns, which diagonalises A^T A
// two-sidedly). Values are returned in descending order.
//
// Convergence: the largest normalised off-diagonal |a_i . a_j| / (|a_i||a_j|)
// falls below `tol`. Throws NumericError if `max_sweeps` sweeps do not get
// there.
std::vector<double> jacobi_singular_values(const Mat& a, double tol = 1e-10,
                                           int max_sweeps = 100);

// #{sigma_i > tol * sigma_max}; zero for an all-zero spectrum
int numerical_rank(const std::vector<double>& singular_values, double tol);

} // namespace ucan

#endif
