// Dense symmetric matrices and the small set of operations the rest of the
// toolkit needs: submodularity tests, a self-contained symmetric eigensolver,
// and the svec packing used by the conic solver's PSD coordinates.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qsmbox/common.hpp"

namespace qsmbox {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b);
double norm_inf(const Vec& v);
double norm2(const Vec& v);
// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

// Symmetric matrix of order n, dense row-major n*n storage. Construction from
// a full square array symmetrizes (M + M')/2; if the input's asymmetry
// exceeds 1e-12 * (1 + max |entry|) that is treated as a caller bug and
// throws AsymmetryError rather than silently averaging.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}
  // From row-major n*n data (symmetrized, checked).
  SymMatrix(std::size_t n, const Vec& rowmajor);

  static SymMatrix identity(std::size_t n);

  std::size_t n() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  // Symmetric write: sets both (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, double v) {
    a_[i * n_ + j] = v;
    a_[j * n_ + i] = v;
  }
  void add(std::size_t i, std::size_t j, double v) {
    a_[i * n_ + j] += v;
    if (i != j) a_[j * n_ + i] += v;
  }
  const Vec& data() const { return a_; }

  double max_abs() const;
  // y = M x
  Vec mul(const Vec& x) const;
  // <M, N> = sum_ij M_ij N_ij
  double inner(const SymMatrix& other) const;

 private:
  std::size_t n_ = 0;
  Vec a_;
};

// Off-diagonal entries all <= tol (the quadratic-form submodularity test).
bool is_submodular(const SymMatrix& m, double tol = 0.0);

// The (n+1)-order matrix [[corner, border'], [border, body]].
SymMatrix bordered(double corner, const Vec& border, const SymMatrix& body);

struct EigResult {
  Vec values;       // ascending
  Vec vectors;      // row-major n*n; column k is the eigenvector for values[k]
  std::size_t n = 0;
  double vector_entry(std::size_t i, std::size_t k) const { return vectors[i * n + k]; }
};

// Full symmetric eigendecomposition (Householder tridiagonalization followed
// by implicit-shift QL). Throws EigenFailure if an eigenvalue fails to
// converge within the sweep cap.
EigResult eig_sym(const SymMatrix& m);

double min_eigenvalue(const SymMatrix& m);

// min_eigenvalue(m) >= -tol
bool is_psd(const SymMatrix& m, double tol = 1e-9);

// svec packing, column-major lower triangle: for j = 0..n-1, i = j..n-1.
// Raw variants copy entries bit-for-bit. Scaled variants multiply
// off-diagonal entries by sqrt(2) (and divide on unpack) so that packed
// Euclidean inner products equal matrix inner products; the scaling makes
// the round trip correct only to rounding, not bit-exact.
std::size_t packed_size(std::size_t n);
Vec pack(const SymMatrix& m);
SymMatrix unpack(std::size_t n, const Vec& packed);
Vec pack_scaled(const SymMatrix& m);
SymMatrix unpack_scaled(std::size_t n, const Vec& packed);

}  // namespace qsmbox
