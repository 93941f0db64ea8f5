// Dense kernels for the interior-point linear algebra: blocked Cholesky of
// the (row-major, full-storage) Schur complement and triangular solves with
// one or many right-hand sides. Single-threaded; the hot loops are written
// as contiguous dot products / rank-updates so the compiler vectorizes them.
#pragma once

#include <cstddef>

#include "qsmbox/symmat.hpp"

namespace qsmbox {

// In-place lower Cholesky A = L L' of a row-major n*n matrix (only the lower
// triangle is read; the strict upper triangle is left untouched). Returns
// false on breakdown (nonpositive or nonfinite pivot); the caller is expected
// to re-regularize and retry.
bool cholesky_inplace(std::size_t n, Vec& a);

// Solve L x = b (forward) / L' x = b (backward) in place, single vector.
void solve_lower(std::size_t n, const Vec& l, Vec& x);
void solve_lower_t(std::size_t n, const Vec& l, Vec& x);

// Same, with nrhs right-hand sides stored row-major as an n x nrhs array
// (row i holds the i-th coordinate of every rhs), so the inner loops run
// unit-stride across systems.
void solve_lower_multi(std::size_t n, const Vec& l, std::size_t nrhs, Vec& x);
void solve_lower_t_multi(std::size_t n, const Vec& l, std::size_t nrhs, Vec& x);

// Solve (L L') x = b in place.
void chol_solve(std::size_t n, const Vec& l, Vec& x);

}  // namespace qsmbox
