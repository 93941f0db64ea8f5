#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "qsmbox/prng.hpp"
#include "qsmbox/symmat.hpp"

using namespace qsmbox;

namespace {

SymMatrix path3_laplacian() {
  return SymMatrix(3, {1, -1, 0, -1, 2, -1, 0, -1, 1});
}

SymMatrix random_symmetric(Prng& rng, std::size_t n) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m.set(i, j, rng.uniform(-1.0, 1.0));
  return m;
}

// G'G for a random square G: positive semidefinite by construction.
SymMatrix random_gram(Prng& rng, std::size_t n) {
  std::vector<double> g(n * n);
  for (double& x : g) x = rng.uniform(-1.0, 1.0);
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[k * n + i] * g[k * n + j];
      m.set(i, j, s);
    }
  return m;
}

// Test-side oracle: outer-product Cholesky with diagonal pivoting. Succeeds
// iff the matrix is positive semidefinite up to the pivot tolerance. Once no
// pivot above tol*scale remains, a PSD matrix can only have negligible mass
// left, so anything larger (including a negative diagonal) means "not PSD".
bool pivoted_cholesky_succeeds(const SymMatrix& m, double tol) {
  const std::size_t n = m.n();
  const double scale = 1.0 + m.max_abs();
  std::vector<double> a = m.data();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (a[i * n + i] > a[p * n + p]) p = i;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      for (std::size_t i = 0; i < n; ++i) std::swap(a[i * n + k], a[i * n + p]);
    }
    const double piv = a[k * n + k];
    if (piv <= tol * scale) {
      for (std::size_t i = k; i < n; ++i)
        for (std::size_t j = k; j < n; ++j)
          if (std::abs(a[i * n + j]) > 10.0 * tol * scale) return false;
      return true;
    }
    for (std::size_t i = k + 1; i < n; ++i)
      for (std::size_t j = k + 1; j < n; ++j)
        a[i * n + j] -= a[i * n + k] * a[k * n + j] / piv;
  }
  return true;
}

bool within_one_ulp(double a, double b) {
  return a == b || b == std::nextafter(a, HUGE_VAL) ||
         b == std::nextafter(a, -HUGE_VAL);
}

}  // namespace

TEST_CASE("construction symmetrizes and validates") {
  SymMatrix m(2, {1.0, 0.5, 0.5, 2.0});
  CHECK(m(0, 1) == 0.5);
  CHECK(m(1, 0) == 0.5);

  // Asymmetry below threshold is averaged away.
  SymMatrix tiny(2, {1.0, 0.5 + 5e-14, 0.5, 1.0});
  CHECK(tiny(0, 1) == tiny(1, 0));

  // Asymmetry above 1e-12*(1+max|entry|) is a caller bug.
  CHECK_THROWS_AS(SymMatrix(2, {0.0, 1e-6, 0.0, 0.0}), AsymmetryError);
  CHECK_THROWS_AS(SymMatrix(2, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("symmetrization idempotence: symmetric input is preserved bit-for-bit") {
  Prng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.below(8);
    SymMatrix m = random_symmetric(rng, n);
    SymMatrix m2(n, m.data());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(m2(i, j) == m(i, j));
  }
}

TEST_CASE("is_submodular") {
  CHECK(is_submodular(SymMatrix(2, {2, -1, -1, 3}), 0.0));
  CHECK_FALSE(is_submodular(SymMatrix(2, {0, 0.5, 0.5, 0}), 0.0));
  CHECK(is_submodular(path3_laplacian(), 0.0));
  // The tolerance admits slightly positive off-diagonals.
  CHECK(is_submodular(SymMatrix(2, {0, 1e-9, 1e-9, 0}), 1e-8));
}

TEST_CASE("min_eigenvalue on known spectra") {
  CHECK(std::abs(min_eigenvalue(SymMatrix::identity(3)) - 1.0) <= 2e-10);
  CHECK(std::abs(min_eigenvalue(SymMatrix(2, {0, 1, 1, 0})) - (-1.0)) <= 2e-10);
  CHECK(std::abs(min_eigenvalue(path3_laplacian()) - 0.0) <= 3e-10);
}

TEST_CASE("is_psd") {
  CHECK(is_psd(SymMatrix::identity(2), 1e-9));
  CHECK_FALSE(is_psd(SymMatrix(2, {1, 2, 2, 1}), 1e-9));
  CHECK(is_psd(path3_laplacian(), 1e-9));
}

TEST_CASE("eigendecomposition: residuals, orthonormality, ordering") {
  Prng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng.below(10);
    SymMatrix m = rep % 2 == 0 ? random_symmetric(rng, n) : random_gram(rng, n);
    EigResult r = eig_sym(m);
    const double tol = 1e-10 * (1.0 + m.max_abs());

    for (std::size_t k = 0; k + 1 < n; ++k) CHECK(r.values[k] <= r.values[k + 1]);

    for (std::size_t k = 0; k < n; ++k) {
      Vec v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = r.vector_entry(i, k);
      Vec mv = m.mul(v);
      double resid = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        resid += (mv[i] - r.values[k] * v[i]) * (mv[i] - r.values[k] * v[i]);
      CHECK(std::sqrt(resid) <= 20 * tol);
      CHECK(std::abs(norm2(v) - 1.0) <= 1e-12);
    }

    // Columns pairwise orthogonal.
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k + 1; l < n; ++l) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          s += r.vector_entry(i, k) * r.vector_entry(i, l);
        CHECK(std::abs(s) <= 1e-12);
      }
  }
}

TEST_CASE("is_psd agrees with pivoted Cholesky on 1000 random matrices") {
  Prng rng(23);
  const double tol = 1e-9;
  int skipped = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(10);
    SymMatrix m = rep < 500 ? random_gram(rng, n) : random_symmetric(rng, n);
    const double scale = 1.0 + m.max_abs();
    // Near the decision boundary both sides are legitimately ambiguous.
    if (std::abs(min_eigenvalue(m)) <= 1e-7 * scale) {
      ++skipped;
      continue;
    }
    CHECK(is_psd(m, tol * scale) == pivoted_cholesky_succeeds(m, tol));
  }
  CHECK(skipped < 50);
}

TEST_CASE("raw packing round-trips bit-for-bit") {
  Prng rng(31);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(10);
    SymMatrix m = random_symmetric(rng, n);
    Vec p = pack(m);
    REQUIRE(p.size() == packed_size(n));
    SymMatrix m2 = unpack(n, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(m2(i, j) == m(i, j));
  }
}

TEST_CASE("packing order is column-major lower triangle") {
  SymMatrix m(3, {1, 2, 3, 2, 4, 5, 3, 5, 6});
  Vec p = pack(m);
  CHECK(p == Vec{1, 2, 3, 4, 5, 6});
}

TEST_CASE("scaled packing: one-ulp round-trip and inner-product preservation") {
  Prng rng(37);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.below(10);
    SymMatrix a = random_symmetric(rng, n);
    SymMatrix b = random_symmetric(rng, n);

    SymMatrix a2 = unpack_scaled(n, pack_scaled(a));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(within_one_ulp(a(i, j), a2(i, j)));

    const double ip = dot(pack_scaled(a), pack_scaled(b));
    const double exact = a.inner(b);
    CHECK(std::abs(ip - exact) <= 1e-12 * (1.0 + std::abs(exact)));
  }
}

TEST_CASE("vector helpers") {
  Vec a{1, 2, 3};
  Vec b{4, 5, 6};
  CHECK(dot(a, b) == 32.0);
  CHECK(norm_inf(Vec{-3, 2}) == 3.0);
  CHECK(norm2(Vec{3, 4}) == 5.0);
  Vec y{1, 1, 1};
  axpy(2.0, a, y);
  CHECK(y == Vec{3, 5, 7});
  CHECK_THROWS_AS(dot(a, Vec{1}), DimensionError);
}
