#include <cmath>
#include <limits>

#include "doctest.h"
#include "qsmbox/qsmb.hpp"

using namespace qsmbox;

namespace {

QsmbProblem make_problem(std::size_t n, const Vec& qdata, const Vec& c, double kappa) {
  QsmbProblem p;
  p.Q = SymMatrix(n, qdata);
  p.c = c;
  p.kappa = kappa;
  return p;
}

// Independent small-n minimizer over an arbitrary box [l, u]: enumerates the
// 3^n boundary patterns and solves each restricted stationarity system via
// an eigendecomposition. Used to cross-check the unit-box transform.
double boxed_min(const QsmbProblem& p, const Vec& l, const Vec& u) {
  const std::size_t n = p.n();
  double best = std::numeric_limits<double>::infinity();
  std::size_t total = 1;
  for (std::size_t j = 0; j < n; ++j) total *= 3;
  std::vector<int> digit(n, 0);
  Vec x(n, 0.0);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t t = code;
    for (std::size_t j = 0; j < n; ++j) {
      digit[j] = int(t % 3);
      t /= 3;
    }
    std::vector<std::size_t> interior;
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = digit[j] == 1 ? u[j] : l[j];
      if (digit[j] == 2) interior.push_back(j);
    }
    if (!interior.empty()) {
      const std::size_t k = interior.size();
      SymMatrix A(k);
      Vec rhs(k, 0.0);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b)
          A.set(a, b, 2.0 * p.Q(interior[a], interior[b]));
        double r = -p.c[interior[a]];
        for (std::size_t j = 0; j < n; ++j)
          if (digit[j] != 2) r -= 2.0 * p.Q(interior[a], j) * x[j];
        rhs[a] = r;
      }
      const EigResult ea = eig_sym(A);
      double scale = 0.0;
      for (double lam : ea.values) scale = std::max(scale, std::abs(lam));
      if (scale == 0.0) continue;
      bool ok = true;
      Vec xi(k, 0.0);
      for (std::size_t kk = 0; kk < k; ++kk) {
        if (std::abs(ea.values[kk]) <= 1e-10 * scale) {
          ok = false;
          break;
        }
        double proj = 0.0;
        for (std::size_t a = 0; a < k; ++a) proj += ea.vector_entry(a, kk) * rhs[a];
        proj /= ea.values[kk];
        for (std::size_t a = 0; a < k; ++a) xi[a] += proj * ea.vector_entry(a, kk);
      }
      if (!ok) continue;  // degenerate pattern; covered by its boundary patterns
      for (std::size_t a = 0; a < k; ++a) {
        const std::size_t j = interior[a];
        x[j] = std::min(u[j], std::max(l[j], xi[a]));
      }
    }
    const double v = evaluate_qp(p, x);
    if (v < best) best = v;
  }
  return best;
}

}  // namespace

TEST_CASE("evaluate_qp computes the exact quadratic value") {
  CHECK(evaluate_qp(make_problem(2, {0, 0, 0, 0}, {0, 0}, 5.0), {0.3, 0.7}) ==
        doctest::Approx(5.0));
  CHECK(evaluate_qp(make_problem(1, {1}, {-2}, 0.0), {1.0}) ==
        doctest::Approx(-1.0));
  CHECK(evaluate_qp(make_problem(2, {1, -1, -1, 1}, {1, -1}, 0.0), {0.0, 0.5}) ==
        doctest::Approx(-0.25));
  CHECK_THROWS_AS(evaluate_qp(make_problem(2, {1, 0, 0, 1}, {0, 0}, 0.0), {1.0}),
                  DimensionError);
}

TEST_CASE("build_relaxation: block layout and constraint census") {
  const QsmbProblem p2 = make_problem(2, {1, -1, -1, 1}, {1, -1}, 0.0);
  const QsmbProblem p1 = make_problem(1, {1}, {-2}, 0.25);

  SUBCASE("TightRlt at n=2: PSD(3) and 4 inequality rows") {
    BuiltProgram bp = build_relaxation(p2, RelaxKind::TightRlt);
    REQUIRE(bp.program.blocks.size() == 2);  // moment block + slack block
    CHECK(bp.program.blocks[0].kind == BlockKind::Psd);
    CHECK(bp.program.blocks[0].dim == 3);
    CHECK(bp.slack_count == 4);
    CHECK(bp.program.rows.size() == 5);  // 4 inequalities + corner pin
  }

  SUBCASE("Basic at n=2: 2 inequality rows") {
    BuiltProgram bp = build_relaxation(p2, RelaxKind::Basic);
    CHECK(bp.slack_count == 2);
    CHECK(bp.program.rows.size() == 3);
  }

  SUBCASE("FullRlt at n=1: all four families give 4 inequality rows") {
    BuiltProgram bp = build_relaxation(p1, RelaxKind::FullRlt);
    CHECK(bp.program.blocks[0].dim == 2);
    CHECK(bp.slack_count == 4);
    CHECK(bp.program.rows.size() == 5);
    CHECK(bp.objective_constant == doctest::Approx(0.25));
  }

  SUBCASE("FullRlt census formula at n=3") {
    const QsmbProblem p3 = make_problem(
        3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}, 0.0);
    BuiltProgram bp = build_relaxation(p3, RelaxKind::FullRlt);
    CHECK(bp.slack_count == 2 * 9 + 6 + 6);
  }
}

TEST_CASE("solve_qsmb on the reference instances") {
  SolverSettings st;

  SUBCASE("convex 1-D: min x^2 - 2x attains -1 at x = 1") {
    QsmbResult r = solve_qsmb(make_problem(1, {1}, {-2}, 0.0), RelaxKind::TightRlt, st);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.value == doctest::Approx(-1.0).epsilon(1e-7));
    // Point accuracy near a degenerate boundary optimum scales like the
    // square root of the gap tolerance.
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  }

  SUBCASE("concave 1-D: the product bound forces X = x at the optimum") {
    QsmbResult r = solve_qsmb(make_problem(1, {-1}, {0}, 0.0), RelaxKind::TightRlt, st);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.value == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(r.X(0, 0) == doctest::Approx(r.x[0]).epsilon(1e-5));
  }

  SUBCASE("indefinite 2-D instance attains -0.25") {
    QsmbResult r = solve_qsmb(make_problem(2, {1, -1, -1, 1}, {1, -1}, 0.0),
                              RelaxKind::TightRlt, st);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.value == doctest::Approx(-0.25).epsilon(1e-6));
  }
}

TEST_CASE("oracle_global_min enumerates patterns exactly") {
  OraclePoint a = oracle_global_min(make_problem(1, {1}, {-2}, 0.0));
  CHECK(a.value == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(a.x[0] == doctest::Approx(1.0));

  // Per-coordinate concave with slope exactly canceling: all vertices tie
  // at zero and the interior is worse.
  OraclePoint b = oracle_global_min(
      make_problem(2, {-1, 0, 0, -1}, {1, 1}, 0.0));
  CHECK(b.value == doctest::Approx(0.0).epsilon(1e-12));
  for (double v : b.x) CHECK((std::abs(v) < 1e-12 || std::abs(v - 1.0) < 1e-12));

  OraclePoint c = oracle_global_min(make_problem(2, {1, -1, -1, 1}, {1, -1}, 0.0));
  CHECK(c.value == doctest::Approx(-0.25).epsilon(1e-12));

  QsmbProblem big;
  big.Q = SymMatrix(13);
  big.c.assign(13, 0.0);
  CHECK_THROWS_AS(oracle_global_min(big), DimensionTooLarge);
}

TEST_CASE("oracle grid fallback handles a singular interior system") {
  // Q is singular (rank 1), so the full-interior pattern's stationarity
  // system is degenerate; the optimum sits on a line x1 - x2 = -1/2 and is
  // found through the bounded grid sweep / smaller patterns.
  OraclePoint r = oracle_global_min(make_problem(2, {1, -1, -1, 1}, {1, -1}, 0.0));
  CHECK(r.value == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(r.x[0] - r.x[1] == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("recover_point: rank-1 extraction") {
  const QsmbProblem p = make_problem(1, {1}, {-2}, 0.0);
  SolverSettings st;
  QsmbResult r = solve_qsmb(p, RelaxKind::TightRlt, st);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.moment_rank == 1);
  auto rec = recover_point(p, r, 1e-6);
  REQUIRE(rec.has_value());
  CHECK(rec->method == "rank1");
  CHECK(rec->x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(rec->value == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("recover_point: nonpositive linear term recovers the far vertex") {
  const QsmbProblem p = make_problem(2, {0, -1, -1, 0}, {0, 0}, 0.0);
  SolverSettings st;
  QsmbResult r = solve_qsmb(p, RelaxKind::TightRlt, st);
  REQUIRE(r.status == SolveStatus::Optimal);
  auto rec = recover_point(p, r, 1e-6);
  REQUIRE(rec.has_value());
  CHECK(rec->value == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(rec->x[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(rec->x[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("recover_point: flat optimal face still yields a matching point") {
  const QsmbProblem p = make_problem(2, {1, -1, -1, 1}, {1, -1}, 0.0);
  SolverSettings st;
  QsmbResult r = solve_qsmb(p, RelaxKind::TightRlt, st);
  REQUIRE(r.status == SolveStatus::Optimal);
  auto rec = recover_point(p, r, 1e-6);
  REQUIRE(rec.has_value());
  CHECK(rec->value == doctest::Approx(-0.25).epsilon(1e-5));
  for (double v : rec->x) {
    CHECK(v >= -1e-9);
    CHECK(v <= 1.0 + 1e-9);
  }
  // A recovered point can never beat the relaxation lower bound.
  CHECK(rec->value >= r.value - 1e-6 * (1.0 + std::abs(r.value)));
}

TEST_CASE("relaxation ordering: more constraints, higher minimum") {
  Prng rng(42);
  SolverSettings st;
  for (int t = 0; t < 18; ++t) {
    const std::size_t n = 1 + rng.below(5);
    QsmbProblem p = random_submodular_problem(n, rng);
    if (t % 2 == 1) {
      // Break submodularity on some instances; the ordering must still hold.
      for (std::size_t i = 0; i + 1 < n; ++i) p.Q.set(i, i + 1, rng.uniform());
    }
    QsmbResult rb = solve_qsmb(p, RelaxKind::Basic, st);
    QsmbResult rt = solve_qsmb(p, RelaxKind::TightRlt, st);
    QsmbResult rf = solve_qsmb(p, RelaxKind::FullRlt, st);
    CAPTURE(t);
    CAPTURE(n);
    REQUIRE(rb.status == SolveStatus::Optimal);
    REQUIRE(rt.status == SolveStatus::Optimal);
    REQUIRE(rf.status == SolveStatus::Optimal);
    const double scale =
        1.0 + std::abs(rb.value) + std::abs(rt.value) + std::abs(rf.value);
    CHECK(rf.value >= rt.value - 1e-7 * scale);
    CHECK(rt.value >= rb.value - 1e-7 * scale);
  }
}

TEST_CASE("tightness for submodular instances across dimensions") {
  Prng rng(7777);
  SolverSettings st;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int t = 0; t < 4; ++t) {
      QsmbProblem p = random_submodular_problem(n, rng);
      QsmbResult r = solve_qsmb(p, RelaxKind::TightRlt, st, /*compare_oracle=*/true);
      CAPTURE(n);
      CAPTURE(t);
      REQUIRE(r.status == SolveStatus::Optimal);
      REQUIRE(r.tight.has_value());
      CHECK(*r.tight);
      const OraclePoint truth = oracle_global_min(p);
      CHECK(std::abs(r.value - truth.value) <=
            1e-5 * (1.0 + std::abs(truth.value)));
    }
  }
}

TEST_CASE("nonpositive linear term: the basic relaxation is already tight") {
  Prng rng(31337);
  SolverSettings st;
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 1 + rng.below(5);
    QsmbProblem p = random_submodular_problem(n, rng);
    for (double& cv : p.c) cv = -std::abs(cv);
    QsmbResult r = solve_qsmb(p, RelaxKind::Basic, st);
    CAPTURE(t);
    CAPTURE(n);
    REQUIRE(r.status == SolveStatus::Optimal);
    const OraclePoint truth = oracle_global_min(p);
    const double scale = 1.0 + std::abs(truth.value);
    CHECK(std::abs(r.value - truth.value) <= 1e-5 * scale);

    // The square roots of the product diagonal attain the optimum.
    Vec x(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      x[j] = std::sqrt(std::min(1.0, std::max(0.0, r.X(j, j))));
    CHECK(std::abs(evaluate_qp(p, x) - truth.value) <= 1e-5 * scale);
  }
}

TEST_CASE("gap witness: a positive linear coefficient defeats Basic only") {
  // One concave coordinate with an uphill linear term: Basic lets the border
  // variable run to -1, while the product bound pins it to the box.
  const QsmbProblem p = make_problem(2, {-1, 0, 0, 0}, {0.5, 0}, 0.0);
  SolverSettings st;
  const OraclePoint truth = oracle_global_min(p);
  CHECK(truth.value == doctest::Approx(-0.5).epsilon(1e-12));

  QsmbResult rb = solve_qsmb(p, RelaxKind::Basic, st);
  REQUIRE(rb.status == SolveStatus::Optimal);
  CHECK(rb.value < truth.value - 1e-3);

  QsmbResult rt = solve_qsmb(p, RelaxKind::TightRlt, st);
  REQUIRE(rt.status == SolveStatus::Optimal);
  CHECK(std::abs(rt.value - truth.value) <= 1e-5 * (1.0 + std::abs(truth.value)));
}

TEST_CASE("nonpositive diagonal: the oracle minimum sits on a vertex") {
  Prng rng(991);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 1 + rng.below(6);
    QsmbProblem p = random_submodular_problem(n, rng);
    for (std::size_t j = 0; j < n; ++j) p.Q.set(j, j, -rng.uniform());
    const OraclePoint truth = oracle_global_min(p);

    double best_vertex = std::numeric_limits<double>::infinity();
    Vec x(n, 0.0);
    for (std::size_t mask = 0; mask < (std::size_t(1) << n); ++mask) {
      for (std::size_t j = 0; j < n; ++j) x[j] = double((mask >> j) & 1);
      best_vertex = std::min(best_vertex, evaluate_qp(p, x));
    }
    CAPTURE(t);
    CAPTURE(n);
    CHECK(truth.value == best_vertex);
  }
}

TEST_CASE("affine box change preserves the minimum") {
  Prng rng(5150);
  for (int t = 0; t < 8; ++t) {
    const std::size_t n = 1 + rng.below(3);
    QsmbProblem p = random_submodular_problem(n, rng);
    Vec l(n), u(n);
    for (std::size_t j = 0; j < n; ++j) {
      l[j] = rng.uniform(-1.0, 0.5);
      u[j] = l[j] + rng.uniform(0.2, 1.5);
    }
    const QsmbProblem q = transform_to_unit_box(p, l, u);

    // Pointwise identity of the substitution.
    Vec tpt(n);
    for (std::size_t j = 0; j < n; ++j) tpt[j] = rng.uniform();
    Vec xpt(n);
    for (std::size_t j = 0; j < n; ++j) xpt[j] = l[j] + (u[j] - l[j]) * tpt[j];
    CHECK(evaluate_qp(q, tpt) ==
          doctest::Approx(evaluate_qp(p, xpt)).epsilon(1e-10));

    const double direct = boxed_min(p, l, u);
    const OraclePoint transformed = oracle_global_min(q);
    CAPTURE(t);
    CAPTURE(n);
    const double scale = 1.0 + std::abs(direct);
    CHECK(std::abs(direct - transformed.value) <= 1e-8 * scale);
  }
}

TEST_CASE("random instance generator is submodular and deterministic") {
  Prng a(19);
  Prng b(19);
  QsmbProblem pa = random_submodular_problem(5, a);
  QsmbProblem pb = random_submodular_problem(5, b);
  CHECK(is_submodular(pa.Q));
  CHECK(pa.Q.data() == pb.Q.data());
  CHECK(pa.c == pb.c);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (i != j) CHECK(pa.Q(i, j) <= 0.0);
}
