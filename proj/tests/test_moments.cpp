#include "qsmbox/moments.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "doctest.h"
#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/model.hpp"
#include "qsmbox/prng.hpp"
#include "qsmbox/qsmb.hpp"
#include "qsmbox/symmat.hpp"

using namespace qsmbox;

namespace {

SymMatrix mat2(double a00, double a01, double a11) {
  SymMatrix m(2);
  m.set(0, 0, a00);
  m.set(0, 1, a01);
  m.set(1, 1, a11);
  return m;
}

// Means 1/2 and the second-moment matrix of two independent Uniform[0,1]
// draws: diagonal 1/3, cross moment 1/4.
MomentSpec iid_uniform_spec() {
  MomentSpec s;
  s.mu = {0.5, 0.5};
  s.sigma = mat2(1.0 / 3.0, 0.25, 1.0 / 3.0);
  return s;
}

// Constant-cost instance: one piece, no quadratic or linear part, no
// decision.
PiecewiseQuadratic constant_cost(std::size_t n, double c) {
  PiecewiseQuadratic f;
  f.n = n;
  f.m = 0;
  QuadPiece p;
  p.A0 = SymMatrix(n);
  p.b0.assign(n, 0.0);
  p.c0 = c;
  f.pieces.push_back(p);
  return f;
}

// Negated two-vertex path energy: cost -(xi_1 - xi_2)^2.
PiecewiseQuadratic negated_path_energy() {
  PiecewiseQuadratic f;
  f.n = 2;
  f.m = 0;
  QuadPiece p;
  p.A0 = mat2(-1.0, 1.0, -1.0);
  p.b0 = {0.0, 0.0};
  p.c0 = 0.0;
  f.pieces.push_back(p);
  return f;
}

// A moment spec that is nonempty by construction: moments of a random
// atomic distribution with interior atoms, with the off-diagonal lower
// bounds slackened below the realized cross moments.
MomentSpec random_nonempty_spec(std::size_t n, Prng& rng) {
  const std::size_t atoms = n + 2 + rng.below(3);
  std::vector<Vec> xi(atoms, Vec(n));
  Vec wt(atoms);
  double total = 0.0;
  for (std::size_t r = 0; r < atoms; ++r) {
    for (std::size_t i = 0; i < n; ++i) xi[r][i] = rng.uniform(0.1, 0.9);
    wt[r] = rng.uniform(0.2, 1.0);
    total += wt[r];
  }
  MomentSpec s;
  s.mu.assign(n, 0.0);
  SymMatrix t(n);
  for (std::size_t r = 0; r < atoms; ++r) {
    const double p = wt[r] / total;
    for (std::size_t i = 0; i < n; ++i) {
      s.mu[i] += p * xi[r][i];
      for (std::size_t j = i; j < n; ++j) t.add(i, j, p * xi[r][i] * xi[r][j]);
    }
  }
  s.sigma = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.sigma.set(i, i, t(i, i));
    for (std::size_t j = i + 1; j < n; ++j)
      s.sigma.set(i, j, t(i, j) - rng.uniform(0.02, 0.2));
  }
  return s;
}

// Moments of a random atomic measure (not normalized), for measure-cone
// membership: lower bounds again slackened below the realized values.
ConePoint random_measure_point(std::size_t n, Prng& rng) {
  const std::size_t atoms = n + 2 + rng.below(3);
  ConePoint pt;
  pt.c0 = 0.0;
  pt.c1.assign(n, 0.0);
  SymMatrix t(n);
  for (std::size_t r = 0; r < atoms; ++r) {
    const double w = rng.uniform(0.2, 1.0);
    Vec xi(n);
    for (std::size_t i = 0; i < n; ++i) xi[i] = rng.uniform(0.1, 0.9);
    pt.c0 += w;
    for (std::size_t i = 0; i < n; ++i) {
      pt.c1[i] += w * xi[i];
      for (std::size_t j = i; j < n; ++j) t.add(i, j, w * xi[i] * xi[j]);
    }
  }
  pt.C2 = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    pt.C2.set(i, i, t(i, i));
    for (std::size_t j = i + 1; j < n; ++j)
      pt.C2.set(i, j, t(i, j) - rng.uniform(0.0, 0.3));
  }
  return pt;
}

// Random quadratic with submodular matrix part, shifted so its box minimum
// is exactly `shift`.
ConePoint shifted_box_quadratic(std::size_t n, double shift, Prng& rng) {
  QsmbProblem p;
  p.Q = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) p.Q.set(i, j, -rng.uniform());
    p.Q.set(i, i, rng.uniform(-1.0, 1.0));
  }
  p.c.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.c[i] = rng.uniform(-1.0, 1.0);
  p.kappa = 0.0;
  OraclePoint truth = oracle_global_min(p);
  ConePoint pt;
  pt.c0 = -truth.value + shift;
  pt.c1 = p.c;
  pt.C2 = p.Q;
  return pt;
}

double pairing(const ConePoint& mpt, const ConePoint& kpt) {
  return mpt.c0 * kpt.c0 + dot(mpt.c1, kpt.c1) + mpt.C2.inner(kpt.C2);
}

}  // namespace

TEST_CASE("shape validation rejects inconsistent inputs") {
  MomentSpec s;
  s.mu = {0.5, 0.5};
  s.sigma = SymMatrix(3);
  CHECK_THROWS_AS(s.check_shape(), DimensionError);

  ConePoint pt;
  pt.c1 = {0.0};
  pt.C2 = SymMatrix(2);
  CHECK_THROWS_AS(pt.check_shape(), DimensionError);

  PiecewiseQuadratic f = constant_cost(2, 0.0);
  f.pieces[0].b0 = {0.0};
  CHECK_THROWS_AS(f.check_shape(), DimensionError);
  f = constant_cost(2, 0.0);
  f.pieces.clear();
  CHECK_THROWS_AS(f.check_shape(), DimensionError);
}

TEST_CASE("delage-ye nonemptiness closed form") {
  MomentSpec s = iid_uniform_spec();
  CHECK(q_nonempty(s));

  // Boundary: second moments of a point mass (rank-1 bordered matrix).
  s.sigma = mat2(0.25, 0.25, 0.25);
  CHECK(q_nonempty(s));

  // Schur complement negative definite.
  s.sigma = mat2(0.24, 0.25, 0.24);
  CHECK_FALSE(q_nonempty(s));

  // Mean outside the unit box.
  s = iid_uniform_spec();
  s.mu[0] = 1.5;
  CHECK_FALSE(q_nonempty(s));
}

TEST_CASE("lower-bounded-set nonemptiness with completion certificate") {
  MomentSpec s = iid_uniform_spec();
  MConeCheck chk = p_nonempty(s);
  CHECK(chk.member);
  REQUIRE(chk.W.has_value());
  const SymMatrix& w = *chk.W;
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(w(i, i) - s.sigma(i, i)) <= 1e-8);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(w(i, j) >= s.sigma(i, j) - 1e-8);
      CHECK(w(i, j) <= s.mu[i] + 1e-8);
    }
  }
  SymMatrix b = bordered(1.0, s.mu, w);
  CHECK(min_eigenvalue(b) >= -1e-8 * (1.0 + b.max_abs()));

  // A fixed second moment above the mean contradicts W <= mu e'.
  s.sigma = mat2(0.6, 0.25, 1.0 / 3.0);
  CHECK_FALSE(p_nonempty(s).member);

  // Zero variance: the point mass at mu is the only candidate, and works.
  s = iid_uniform_spec();
  s.sigma = mat2(0.25, 0.25, 0.25);
  CHECK(p_nonempty(s).member);
}

TEST_CASE("quadratic-cone membership examples") {
  ConePoint pt;
  pt.c0 = 0.0;
  pt.c1 = {0.0, 0.0};
  pt.C2 = SymMatrix::identity(2);
  KConeCheck chk = k_cone_member(pt, 1e-8);
  CHECK(chk.member);
  CHECK(std::abs(chk.margin) <= 1e-6);  // the corner pins the margin at zero
  REQUIRE(chk.Z.has_value());
  // Recompute the certificate's bordered matrix and eigen-check it.
  const Vec& z = *chk.Z;
  SymMatrix b(3);
  b.set(0, 0, pt.c0);
  for (std::size_t j = 0; j < 2; ++j) {
    double colsum = z[j] + z[2 + j];
    b.set(0, j + 1, 0.5 * (pt.c1[j] - colsum));
  }
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = i; j < 2; ++j)
      b.set(i + 1, j + 1, pt.C2(i, j) + 0.5 * (z[i * 2 + j] + z[j * 2 + i]));
  CHECK(min_eigenvalue(b) >= -1e-6 * (1.0 + b.max_abs()));

  pt.c0 = -0.1;  // the quadratic is -0.1 at the origin
  chk = k_cone_member(pt, 1e-8);
  CHECK_FALSE(chk.member);
  CHECK(chk.margin == doctest::Approx(-0.1).epsilon(1e-4));

  pt.c0 = 1.0;  // positive off-diagonal fails the submodularity gate
  pt.C2 = mat2(0.0, 0.5, 0.0);
  chk = k_cone_member(pt, 1e-8);
  CHECK_FALSE(chk.member);
  CHECK(chk.margin == doctest::Approx(-0.5));
  CHECK_FALSE(chk.Z.has_value());
}

TEST_CASE("measure-cone membership examples") {
  ConePoint pt;
  pt.c0 = 1.0;
  pt.c1 = {0.5, 0.5};
  pt.C2 = mat2(1.0 / 3.0, 0.25, 1.0 / 3.0);
  MConeCheck chk = m_cone_member(pt, 1e-8);
  CHECK(chk.member);
  CHECK(chk.margin > 0.0);

  pt.c0 = 0.0;  // the zero measure sits on the cone's boundary
  pt.c1 = {0.0, 0.0};
  pt.C2 = SymMatrix(2);
  chk = m_cone_member(pt, 1e-8);
  CHECK(chk.member);
  CHECK(std::abs(chk.margin) <= 1e-6);

  pt.c0 = 1.0;  // negative fixed second moments contradict the psd corner
  pt.c1 = {0.5, 0.5};
  pt.C2 = mat2(-1.0, 0.0, -1.0);
  chk = m_cone_member(pt, 1e-8);
  CHECK_FALSE(chk.member);
}

TEST_CASE("cone duality pairing is nonnegative on members") {
  Prng rng(501);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(4);
    ConePoint mpt = random_measure_point(n, rng);
    ConePoint kpt = shifted_box_quadratic(n, rng.uniform(0.05, 1.0), rng);
    CHECK(m_cone_member(mpt, 1e-8).member);
    CHECK(k_cone_member(kpt, 1e-8).member);
    const double pair = pairing(mpt, kpt);
    double scale = 1.0 + std::abs(mpt.c0 * kpt.c0);
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(mpt.c1[i] * kpt.c1[i]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) scale += std::abs(mpt.C2(i, j) * kpt.C2(i, j));
    CHECK(pair >= -1e-7 * scale);
  }
}

TEST_CASE("quadratic-cone membership matches the box oracle") {
  Prng rng(502);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(5);
    // Keep the box minimum at least 1e-3 away from zero so the margin
    // program and the oracle cannot disagree through roundoff alone.
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double shift = sign * (1e-3 + 0.5 * rng.uniform());
    ConePoint pt = shifted_box_quadratic(n, shift, rng);
    KConeCheck chk = k_cone_member(pt, 1e-6);
    QsmbProblem p;
    p.Q = pt.C2;
    p.c = pt.c1;
    p.kappa = pt.c0;
    OraclePoint truth = oracle_global_min(p);
    CHECK(chk.member == (truth.value >= -1e-6));
  }
}

TEST_CASE("worst-case expectation of a constant is the constant") {
  MomentSpec s = iid_uniform_spec();
  DroResult res = solve_dro_p(s, constant_cost(2, 5.0));
  REQUIRE(res.status == SolveStatus::Optimal);
  CHECK(res.value == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(res.x.empty());

  // Coherence on random nonempty specs, solved tight.
  SolverSettings tight;
  tight.gap_tol = 1e-9;
  tight.feas_tol = 1e-9;
  Prng rng(503);
  for (int t = 0; t < 8; ++t) {
    const std::size_t n = 1 + rng.below(3);
    MomentSpec spec = random_nonempty_spec(n, rng);
    const double c = rng.uniform(-3.0, 3.0);
    DroResult r = solve_dro_p(spec, constant_cost(n, c), tight);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(std::abs(r.value - c) <= 1e-8);
  }
}

TEST_CASE("comonotone optimum closes the negated path energy") {
  MomentSpec s = iid_uniform_spec();
  DroResult res = solve_dro_p(s, negated_path_energy());
  REQUIRE(res.status == SolveStatus::Optimal);
  // sup E[-(xi1 - xi2)^2] = 2 sup E[xi1 xi2] - 2/3, and Cauchy-Schwarz caps
  // the cross moment at 1/3, attained by comonotone uniforms.
  CHECK(std::abs(res.value) <= 1e-6);
  CHECK(res.moment_margin > 1e-6);

  // Extraction consistency: the reported value is the certificate's
  // objective.
  const double recomputed = res.y0 + dot(s.mu, res.y) + s.sigma.inner(res.Y);
  CHECK(std::abs(res.value - recomputed) <= 1e-9 * (1.0 + std::abs(res.value)));
  REQUIRE(res.Z.size() == 1);
  CHECK(res.Z[0].size() == 4);
}

TEST_CASE("scalar-decision two-piece program matches the single-piece expectation") {
  MomentSpec s = iid_uniform_spec();
  DroResult base = solve_dro_p(s, negated_path_energy());
  REQUIRE(base.status == SolveStatus::Optimal);

  // Pieces max(0, -energy - t) with scalar decision t in [0,1]: with the
  // tail level at zero this collapses to the plain worst-case expectation.
  PiecewiseQuadratic f;
  f.n = 2;
  f.m = 1;
  QuadPiece zero;
  zero.A0 = SymMatrix(2);
  zero.b0 = {0.0, 0.0};
  zero.c0 = 0.0;
  zero.Ax = {SymMatrix(2)};
  zero.bx = {{0.0, 0.0}};
  zero.cx = {0.0};
  QuadPiece tail = zero;
  tail.A0 = mat2(-1.0, 1.0, -1.0);
  tail.cx = {-1.0};
  f.pieces = {zero, tail};
  f.lo = {0.0};
  f.hi = {1.0};

  DroResult res = solve_dro_p(s, f);
  REQUIRE(res.status == SolveStatus::Optimal);
  REQUIRE(res.x.size() == 1);
  CHECK(res.x[0] >= -1e-7);
  CHECK(res.x[0] <= 1.0 + 1e-7);
  CHECK(std::abs(res.value - base.value) <= 1e-6);
}

TEST_CASE("adding pieces never lowers the worst case") {
  Prng rng(504);
  for (int t = 0; t < 10; ++t) {
    MomentSpec spec = random_nonempty_spec(2, rng);
    PiecewiseQuadratic f;
    f.n = 2;
    f.m = 0;
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      QuadPiece p;
      p.A0 = mat2(rng.uniform(-1.0, 1.0), rng.uniform(0.0, 0.5), rng.uniform(-1.0, 1.0));
      p.b0 = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      p.c0 = rng.uniform(-0.5, 0.5);
      f.pieces.push_back(p);
      DroResult res = solve_dro_p(spec, f);
      REQUIRE(res.status == SolveStatus::Optimal);
      if (k > 0) {
        const double scale = 1.0 + std::abs(prev) + std::abs(res.value);
        CHECK(res.value >= prev - 1e-7 * scale);
      }
      prev = res.value;
    }
  }
}

TEST_CASE("delage-ye worst case solves and brackets the grid oracle") {
  MomentSpec s = iid_uniform_spec();
  DroResult res = solve_dro_q(s, constant_cost(2, 5.0));
  REQUIRE(res.status == SolveStatus::Optimal);
  CHECK(res.value == doctest::Approx(5.0).epsilon(1e-6));
  REQUIRE(res.z.size() == 1);
  REQUIRE(res.w.size() == 1);
  CHECK(res.z[0].size() == 2);

  DroResult energy = solve_dro_q(s, negated_path_energy());
  REQUIRE(energy.status == SolveStatus::Optimal);

  // Independent lower bound: maximize E[-(xi1-xi2)^2] over distributions on
  // a 21x21 grid in [0,1]^2 subject to the same mean and the semidefinite
  // second-moment cap. Restricting the support can only lower the optimum,
  // so the reformulated value must weakly dominate the grid value.
  ModelBuilder mb;
  const std::size_t np = 21 * 21;
  const std::size_t pc = mb.add_nonneg(np);
  PsdBlockRef cap = mb.add_psd(2);
  const std::size_t rmass = mb.begin_row(1.0);
  const std::size_t rmean0 = mb.begin_row(s.mu[0]);
  const std::size_t rmean1 = mb.begin_row(s.mu[1]);
  std::size_t rmom[3];
  const std::size_t pairs[3][2] = {{0, 0}, {0, 1}, {1, 1}};
  for (int e = 0; e < 3; ++e) {
    rmom[e] = mb.begin_row(s.sigma(pairs[e][0], pairs[e][1]));
    mb.add_psd_entry(rmom[e], cap, pairs[e][0], pairs[e][1], 1.0);
  }
  for (std::size_t a = 0; a < 21; ++a)
    for (std::size_t b = 0; b < 21; ++b) {
      const std::size_t g = a * 21 + b;
      const double x1 = static_cast<double>(a) / 20.0;
      const double x2 = static_cast<double>(b) / 20.0;
      mb.add_coeff(rmass, pc + g, 1.0);
      mb.add_coeff(rmean0, pc + g, x1);
      mb.add_coeff(rmean1, pc + g, x2);
      const double mom[3] = {x1 * x1, x1 * x2, x2 * x2};
      for (int e = 0; e < 3; ++e) mb.add_coeff(rmom[e], pc + g, mom[e]);
      mb.obj_coeff(pc + g, (x1 - x2) * (x1 - x2));
    }
  BuiltProgram built = mb.take();
  ConicSolution grid = solve_conic(built.program, SolverSettings{});
  REQUIRE(grid.status == SolveStatus::Optimal);
  const double grid_value = -grid.pobj;

  CHECK(energy.value <= 1e-7);  // the energy is pointwise nonnegative
  CHECK(energy.value >= grid_value - 1e-6);
}

TEST_CASE("precondition failures name their clause") {
  MomentSpec s = iid_uniform_spec();

  PiecewiseQuadratic unbounded = constant_cost(2, 0.0);
  unbounded.m = 1;
  unbounded.pieces[0].Ax = {SymMatrix(2)};
  unbounded.pieces[0].bx = {{0.0, 0.0}};
  unbounded.pieces[0].cx = {0.0};
  unbounded.lo = {0.0};
  unbounded.hi = {std::numeric_limits<double>::infinity()};
  CHECK_THROWS_WITH_AS(solve_dro_p(s, unbounded), doctest::Contains("decision box"),
                       PreconditionViolated);
  try {
    solve_dro_p(s, unbounded);
  } catch (const PreconditionViolated& e) {
    CHECK(e.which == "a");
  }
  try {
    solve_dro_q(s, unbounded);
  } catch (const PreconditionViolated& e) {
    CHECK(e.which == "box");
  }

  // Decision-dependent off-diagonal that is negative wherever the box
  // allows: caught at the returned decision.
  PiecewiseQuadratic offdiag;
  offdiag.n = 2;
  offdiag.m = 1;
  QuadPiece p;
  p.A0 = SymMatrix(2);
  SymMatrix ax(2);
  ax.set(0, 1, -1.0);
  p.Ax = {ax};
  p.b0 = {0.0, 0.0};
  p.bx = {{0.0, 0.0}};
  p.c0 = 0.0;
  p.cx = {0.0};
  offdiag.pieces = {p};
  offdiag.lo = {0.5};
  offdiag.hi = {1.0};
  try {
    solve_dro_p(s, offdiag);
    FAIL("expected PreconditionViolated");
  } catch (const PreconditionViolated& e) {
    CHECK(e.which == "b");
  }

  MomentSpec empty = iid_uniform_spec();
  empty.sigma = mat2(0.6, 0.25, 1.0 / 3.0);
  try {
    solve_dro_p(empty, constant_cost(2, 0.0));
    FAIL("expected PreconditionViolated");
  } catch (const PreconditionViolated& e) {
    CHECK(e.which == "c");
  }

  MomentSpec qempty = iid_uniform_spec();
  qempty.sigma = mat2(0.24, 0.25, 0.24);
  try {
    solve_dro_q(qempty, constant_cost(2, 0.0));
    FAIL("expected PreconditionViolated");
  } catch (const PreconditionViolated& e) {
    CHECK(e.which == "nonempty");
  }

  // Positive-definite quadratic part violates the negative-semidefinite
  // requirement of the delage-ye reformulation.
  PiecewiseQuadratic posdef = constant_cost(2, 0.0);
  posdef.pieces[0].A0 = SymMatrix::identity(2);
  try {
    solve_dro_q(s, posdef);
    FAIL("expected PreconditionViolated");
  } catch (const PreconditionViolated& e) {
    CHECK(e.which == "nsd");
  }
}

TEST_CASE("returned duals satisfy the documented certificates") {
  MomentSpec s = iid_uniform_spec();
  DroResult res = solve_dro_p(s, negated_path_energy());
  REQUIRE(res.status == SolveStatus::Optimal);
  CHECK(is_submodular(res.Y, 1e-8));
  for (double v : res.Z[0]) CHECK(v >= -1e-8);
  // The dominating quadratic really dominates: its box minimum minus the
  // piece is nonnegative (checked by the oracle on the difference).
  QsmbProblem diff;
  diff.Q = res.Y;
  diff.Q.add(0, 1, -1.0);  // subtract the piece's matrix part
  diff.Q.add(0, 0, 1.0);
  diff.Q.add(1, 1, 1.0);
  diff.c = res.y;
  diff.kappa = res.y0;
  OraclePoint worst = oracle_global_min(diff);
  CHECK(worst.value >= -1e-6);

  DroResult q = solve_dro_q(s, negated_path_energy());
  REQUIRE(q.status == SolveStatus::Optimal);
  CHECK(min_eigenvalue(q.Y) >= -1e-7 * (1.0 + q.Y.max_abs()));
}
