#include "qsmbox/dense.hpp"

#include <algorithm>
#include <cmath>

namespace qsmbox {
namespace {

constexpr std::size_t kNB = 64;  // panel width of the blocked factorization
constexpr std::size_t kTW = 32;  // column-tile width of the trailing update

// Contiguous dot product with independent accumulators so the compiler can
// keep several FMA chains in flight.
inline double dot_chunk(const double* a, const double* b, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t t = 0;
  for (; t + 4 <= k; t += 4) {
    s0 += a[t] * b[t];
    s1 += a[t + 1] * b[t + 1];
    s2 += a[t + 2] * b[t + 2];
    s3 += a[t + 3] * b[t + 3];
  }
  for (; t < k; ++t) s0 += a[t] * b[t];
  return (s0 + s1) + (s2 + s3);
}

// Unblocked left-looking Cholesky of the diagonal block rows [kb, ke),
// touching only columns [kb, ke); previous panels have already been applied.
bool potf2(double* a, std::size_t lda, std::size_t kb, std::size_t ke) {
  for (std::size_t j = kb; j < ke; ++j) {
    double* rowj = a + j * lda;
    double d = rowj[j] - dot_chunk(rowj + kb, rowj + kb, j - kb);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    d = std::sqrt(d);
    rowj[j] = d;
    for (std::size_t i = j + 1; i < ke; ++i) {
      double* rowi = a + i * lda;
      rowi[j] = (rowi[j] - dot_chunk(rowi + kb, rowj + kb, j - kb)) / d;
    }
  }
  return true;
}

// Rank-kw update of one row stripe: a[i][jb..je) -= sum_t p_i[t] * bt[t][..],
// with bt the transposed column tile of the panel. acc spans at most kTW
// entries, so it lives in registers and the jj loop vectorizes.
inline void stripe_update(double* arow_j, const double* prow, const double* bt,
                          std::size_t kw, std::size_t tw) {
  double acc[kTW];
  for (std::size_t jj = 0; jj < tw; ++jj) acc[jj] = arow_j[jj];
  for (std::size_t t = 0; t < kw; ++t) {
    const double ai = prow[t];
    const double* btrow = bt + t * kTW;
    for (std::size_t jj = 0; jj < tw; ++jj) acc[jj] -= ai * btrow[jj];
  }
  for (std::size_t jj = 0; jj < tw; ++jj) arow_j[jj] = acc[jj];
}

}  // namespace

bool cholesky_inplace(std::size_t n, Vec& a) {
  if (a.size() != n * n) throw DimensionError("cholesky_inplace: bad size");
  double* A = a.data();
  Vec btbuf(kNB * kTW);

  for (std::size_t kb = 0; kb < n; kb += kNB) {
    const std::size_t ke = std::min(kb + kNB, n);
    const std::size_t kw = ke - kb;

    if (!potf2(A, n, kb, ke)) return false;

    // Panel solve: rows below the block against the block's lower factor.
    for (std::size_t i = ke; i < n; ++i) {
      double* rowi = A + i * n;
      for (std::size_t j = kb; j < ke; ++j) {
        const double* rowj = A + j * n;
        rowi[j] = (rowi[j] - dot_chunk(rowi + kb, rowj + kb, j - kb)) / rowj[j];
      }
    }

    // Trailing update A[i][j] -= <panel_i, panel_j>, tiled over column
    // blocks; each tile of panel rows is packed transposed so the row-stripe
    // kernel streams it unit-stride.
    for (std::size_t jb = ke; jb < n; jb += kTW) {
      const std::size_t je = std::min(jb + kTW, n);
      const std::size_t tw = je - jb;
      for (std::size_t t = 0; t < kw; ++t)
        for (std::size_t jj = 0; jj < tw; ++jj)
          btbuf[t * kTW + jj] = A[(jb + jj) * n + kb + t];

      // Rows inside the tile: only the lower part j <= i.
      for (std::size_t i = jb; i < je; ++i) {
        double* rowi = A + i * n;
        for (std::size_t j = jb; j <= i; ++j)
          rowi[j] -= dot_chunk(rowi + kb, A + j * n + kb, kw);
      }
      // Rows strictly below the tile: full-width stripe.
      for (std::size_t i = je; i < n; ++i)
        stripe_update(A + i * n + jb, A + i * n + kb, btbuf.data(), kw, tw);
    }
  }
  return true;
}

void solve_lower(std::size_t n, const Vec& l, Vec& x) {
  const double* L = l.data();
  for (std::size_t i = 0; i < n; ++i)
    x[i] = (x[i] - dot_chunk(L + i * n, x.data(), i)) / L[i * n + i];
}

void solve_lower_t(std::size_t n, const Vec& l, Vec& x) {
  const double* L = l.data();
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= L[j * n + i] * x[j];
    x[i] = s / L[i * n + i];
  }
}

void solve_lower_multi(std::size_t n, const Vec& l, std::size_t nrhs, Vec& x) {
  const double* L = l.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = x.data() + i * nrhs;
    for (std::size_t j = 0; j < i; ++j) {
      const double lij = L[i * n + j];
      if (lij == 0.0) continue;
      const double* xj = x.data() + j * nrhs;
      for (std::size_t c = 0; c < nrhs; ++c) xi[c] -= lij * xj[c];
    }
    const double d = L[i * n + i];
    for (std::size_t c = 0; c < nrhs; ++c) xi[c] /= d;
  }
}

void solve_lower_t_multi(std::size_t n, const Vec& l, std::size_t nrhs, Vec& x) {
  const double* L = l.data();
  for (std::size_t i = n; i-- > 0;) {
    double* xi = x.data() + i * nrhs;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double lji = L[j * n + i];
      if (lji == 0.0) continue;
      const double* xj = x.data() + j * nrhs;
      for (std::size_t c = 0; c < nrhs; ++c) xi[c] -= lji * xj[c];
    }
    const double d = L[i * n + i];
    for (std::size_t c = 0; c < nrhs; ++c) xi[c] /= d;
  }
}

void chol_solve(std::size_t n, const Vec& l, Vec& x) {
  solve_lower(n, l, x);
  solve_lower_t(n, l, x);
}

}  // namespace qsmbox
