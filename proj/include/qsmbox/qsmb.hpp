// Box-constrained quadratic minimization  min { x'Qx + c'x + kappa :
// x in [0,1]^n }, its semidefinite relaxations over the bordered moment
// matrix [[1, x'], [x, X]], solution recovery, and an exact small-n oracle.
#pragma once

#include <optional>
#include <string>

#include "qsmbox/conic.hpp"
#include "qsmbox/model.hpp"
#include "qsmbox/prng.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

struct QsmbProblem {
  SymMatrix Q;
  Vec c;
  double kappa = 0.0;

  std::size_t n() const { return c.size(); }
  // Throws DimensionError if Q and c disagree on n.
  void check_shape() const;
};

// The three relaxations, ordered by strength:
//   Basic    - bordered PSD matrix with diag(X) <= 1 only;
//   TightRlt - the n^2 product upper bounds X_ij <= x_i;
//   FullRlt  - all four product-linearization families
//              (X <= xe', X <= ex', X >= 0, X >= xe' + ex' - ee').
enum class RelaxKind { Basic, TightRlt, FullRlt };

struct RecoveredPoint {
  Vec x;
  double value = 0.0;
  std::string method;  // "rank1" | "sqrt_diag" | "boundary_fix" | "polish"
};

struct QsmbResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = 0.0;  // relaxation optimum (includes kappa)
  Vec x;               // border column of the moment matrix
  SymMatrix X;         // product block of the moment matrix
  int moment_rank = 0; // eigenvalues of the bordered matrix > 1e-6 * lambda_max
  std::optional<RecoveredPoint> recovered;
  std::optional<bool> tight;  // set when an oracle comparison was requested
  ConicSolution conic;        // underlying cone solution (for validation)
};

// Exact objective value x'Qx + c'x + kappa; the point is not checked against
// the box (feasibility is the caller's concern).
double evaluate_qp(const QsmbProblem& p, const Vec& x);

// Lowers the chosen relaxation to a standard-form cone program: one
// PSD(n+1) block with the corner pinned to 1 by an equality row, plus the
// kind's inequality families (materialized through slack coordinates).
// Inequality census: Basic n, TightRlt n^2, FullRlt 2n^2 + n(n+1).
// kappa is carried in the returned objective_constant.
BuiltProgram build_relaxation(const QsmbProblem& p, RelaxKind kind);

// Solves the relaxation. When compare_oracle is set and n <= 12, also runs
// the exact oracle and records whether the relaxation value matches it to
// 1e-5 * (1 + |oracle|).
QsmbResult solve_qsmb(const QsmbProblem& p, RelaxKind kind,
                      const SolverSettings& s, bool compare_oracle = false);

// Attempts to turn a TightRlt relaxation optimum into a feasible point of
// the original box problem, trying in order: rank-1 extraction, the
// sqrt-diagonal point (valid when c <= 0), boundary-fixing recursion on
// coordinates of x* within tol of {0,1}, and a projected-gradient polish.
// Returns the first candidate whose objective matches the relaxation value
// to 1e-6 * (1 + |value|); none when every stage misses (the relaxation
// value is still a valid lower bound).
std::optional<RecoveredPoint> recover_point(const QsmbProblem& p,
                                            const QsmbResult& res, double tol);

struct OraclePoint {
  double value = 0.0;
  Vec x;
};

// Exact global minimum by enumerating all 3^n boundary patterns (each
// coordinate at 0, at 1, or interior), solving the interior stationarity
// system per pattern (least-norm + grid sweep on singular patterns), and
// sweeping all 2^n vertices. Throws DimensionTooLarge when n > 12.
OraclePoint oracle_global_min(const QsmbProblem& p);

// Substitutes x = l + diag(u - l) t, mapping minimization over [l, u] to an
// equivalent problem over the unit box. Requires l <= u elementwise.
QsmbProblem transform_to_unit_box(const QsmbProblem& p, const Vec& l, const Vec& u);

// Random test instance: off-diagonals of Q drawn from -Uniform(0,1) (hence
// submodular), diagonal from Uniform(-1,1), c from Uniform(-1,1), kappa = 0.
QsmbProblem random_submodular_problem(std::size_t n, Prng& rng);

}  // namespace qsmbox
