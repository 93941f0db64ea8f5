#include "qsmbox/symmat.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace qsmbox {

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_inf(const Vec& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

SymMatrix::SymMatrix(std::size_t n, const Vec& rowmajor) : n_(n), a_(n * n) {
  if (rowmajor.size() != n * n)
    throw DimensionError("SymMatrix: expected n*n entries");
  double maxabs = 0.0;
  for (double x : rowmajor) maxabs = std::max(maxabs, std::abs(x));
  const double tol = 1e-12 * (1.0 + maxabs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::abs(rowmajor[i * n + j] - rowmajor[j * n + i]);
      if (d > tol) throw AsymmetryError("SymMatrix: input is not symmetric");
    }
  for (std::size_t i = 0; i < n; ++i) {
    a_[i * n + i] = rowmajor[i * n + i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (rowmajor[i * n + j] + rowmajor[j * n + i]);
      a_[i * n + j] = v;
      a_[j * n + i] = v;
    }
  }
}

SymMatrix SymMatrix::identity(std::size_t n) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) m.set(i, i, 1.0);
  return m;
}

double SymMatrix::max_abs() const {
  double s = 0.0;
  for (double x : a_) s = std::max(s, std::abs(x));
  return s;
}

Vec SymMatrix::mul(const Vec& x) const {
  if (x.size() != n_) throw DimensionError("SymMatrix::mul: length mismatch");
  Vec y(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    const double* row = a_.data() + i * n_;
    for (std::size_t j = 0; j < n_; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

double SymMatrix::inner(const SymMatrix& other) const {
  if (other.n_ != n_) throw DimensionError("SymMatrix::inner: order mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a_.size(); ++k) s += a_[k] * other.a_[k];
  return s;
}

bool is_submodular(const SymMatrix& m, double tol) {
  const std::size_t n = m.n();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && m(i, j) > tol) return false;
  return true;
}

SymMatrix bordered(double corner, const Vec& border, const SymMatrix& body) {
  const std::size_t n = border.size();
  if (body.n() != n) throw DimensionError("bordered: border/body size mismatch");
  SymMatrix b(n + 1);
  b.set(0, 0, corner);
  for (std::size_t j = 0; j < n; ++j) b.set(0, j + 1, border[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) b.set(i + 1, j + 1, body(i, j));
  return b;
}

namespace {

// Householder reduction of a symmetric matrix to tridiagonal form with
// accumulated transformations (EISPACK tred2 lineage). v holds the matrix
// row-major on entry and the orthogonal factor on exit; d gets the diagonal,
// e the subdiagonal (e[0] unused).
void tred2(std::size_t n, Vec& v, Vec& d, Vec& e) {
  for (std::size_t j = 0; j < n; ++j) d[j] = v[(n - 1) * n + j];

  for (std::size_t i = n - 1; i > 0; --i) {
    // Scale to avoid under/overflow while forming the Householder vector.
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = v[(i - 1) * n + j];
        v[i * n + j] = 0.0;
        v[j * n + i] = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;

      // Apply the similarity transformation to the leading block.
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        v[j * n + i] = f;
        g = e[j] + v[j * n + j] * f;
        for (std::size_t k = j + 1; k < i; ++k) {
          g += v[k * n + j] * d[k];
          e[k] += v[k * n + j] * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k < i; ++k)
          v[k * n + j] -= f * e[k] + g * d[k];
        d[j] = v[(i - 1) * n + j];
        v[i * n + j] = 0.0;
      }
    }
    d[i] = h;
  }

  // Accumulate the transformations.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    v[(n - 1) * n + i] = v[i * n + i];
    v[i * n + i] = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = v[k * n + i + 1] / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += v[k * n + i + 1] * v[k * n + j];
        for (std::size_t k = 0; k <= i; ++k) v[k * n + j] -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) v[k * n + i + 1] = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = v[(n - 1) * n + j];
    v[(n - 1) * n + j] = 0.0;
  }
  v[(n - 1) * n + (n - 1)] = 1.0;
  e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal form, rotations accumulated into v.
// Eigenvalues land in d (unsorted), eigenvectors in the columns of v.
void tql2(std::size_t n, Vec& v, Vec& d, Vec& e) {
  constexpr int kMaxSweeps = 50;
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = 0x1.0p-52;
  for (std::size_t l = 0; l < n; ++l) {
    // Locate a negligible subdiagonal element.
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n && std::abs(e[m]) > eps * tst1) ++m;
    if (m >= n) m = n - 1;

    if (m > l) {
      int iter = 0;
      do {
        if (++iter > kMaxSweeps)
          throw EigenFailure("eig_sym: QL sweep cap exceeded");

        // Implicit shift from the leading 2x2.
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        // Chase the bulge from the bottom up.
        p = d[m];
        double c = 1.0;
        double c2 = c;
        double c3 = c;
        const double el1 = e[l + 1];
        double s = 0.0;
        double s2 = 0.0;
        for (std::size_t i = m; i-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);

          for (std::size_t k = 0; k < n; ++k) {
            h = v[k * n + i + 1];
            v[k * n + i + 1] = s * v[k * n + i] + c * h;
            v[k * n + i] = c * v[k * n + i] - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }

  // Sort ascending, carrying eigenvector columns along.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::size_t k = i;
    double p = d[i];
    for (std::size_t j = i + 1; j < n; ++j)
      if (d[j] < p) {
        k = j;
        p = d[j];
      }
    if (k != i) {
      d[k] = d[i];
      d[i] = p;
      for (std::size_t j = 0; j < n; ++j)
        std::swap(v[j * n + i], v[j * n + k]);
    }
  }
}

}  // namespace

EigResult eig_sym(const SymMatrix& m) {
  const std::size_t n = m.n();
  if (n == 0) throw DimensionError("eig_sym: empty matrix");
  EigResult r;
  r.n = n;
  r.vectors = m.data();
  r.values.assign(n, 0.0);
  Vec e(n, 0.0);
  tred2(n, r.vectors, r.values, e);
  tql2(n, r.vectors, r.values, e);
  return r;
}

double min_eigenvalue(const SymMatrix& m) { return eig_sym(m).values.front(); }

bool is_psd(const SymMatrix& m, double tol) { return min_eigenvalue(m) >= -tol; }

std::size_t packed_size(std::size_t n) { return n * (n + 1) / 2; }

Vec pack(const SymMatrix& m) {
  const std::size_t n = m.n();
  Vec p(packed_size(n));
  std::size_t k = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j; i < n; ++i) p[k++] = m(i, j);
  return p;
}

SymMatrix unpack(std::size_t n, const Vec& packed) {
  if (packed.size() != packed_size(n))
    throw DimensionError("unpack: wrong packed length");
  SymMatrix m(n);
  std::size_t k = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j; i < n; ++i) m.set(i, j, packed[k++]);
  return m;
}

Vec pack_scaled(const SymMatrix& m) {
  const std::size_t n = m.n();
  const double rt2 = std::sqrt(2.0);
  Vec p(packed_size(n));
  std::size_t k = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j; i < n; ++i)
      p[k++] = (i == j) ? m(i, j) : m(i, j) * rt2;
  return p;
}

SymMatrix unpack_scaled(std::size_t n, const Vec& packed) {
  if (packed.size() != packed_size(n))
    throw DimensionError("unpack_scaled: wrong packed length");
  const double rt2 = std::sqrt(2.0);
  SymMatrix m(n);
  std::size_t k = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = j; i < n; ++i) {
      const double v = packed[k++];
      m.set(i, j, (i == j) ? v : v / rt2);
    }
  return m;
}

}  // namespace qsmbox
