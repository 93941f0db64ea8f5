// Moment-based distributionally robust machinery: membership tests for the
// dual pair of cones behind the box-support ambiguity set (truncated measure
// moments with cross-moment lower bounds on one side, box-nonnegative
// quadratics with submodular matrix part on the other), nonemptiness
// certificates for both ambiguity sets, and worst-case expected-cost
// minimization over each set, lowered to a single conic program.
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

// First- and second-order moment data for a random vector supported on
// [0,1]^n. mu holds the means (each must lie in [0,1]); sigma's diagonal
// fixes the second moments E[xi_i^2] exactly, while its off-diagonals are
// entrywise lower bounds on the cross moments E[xi_i xi_j] for the
// lower-bounded ambiguity set, or the full upper-bound matrix (in the
// semidefinite order) for the Delage-Ye-style set.
struct MomentSpec {
  Vec mu;
  SymMatrix sigma;

  std::size_t n() const { return mu.size(); }
  void check_shape() const;
};

// A point of either cone of the dual pair: read (c0, c1, C2) as
// (lambda0, lambda, Lambda) for a measure-moment point and as (y0, y, Y)
// for a quadratic-coefficient point.
struct ConePoint {
  double c0 = 0.0;
  Vec c1;
  SymMatrix C2;

  std::size_t n() const { return c1.size(); }
  void check_shape() const;
};

// Outcome of a cone-membership test. Each test maximizes a single slack
// margin t across every constraint of the cone's semidefinite description;
// the point is a member when the optimal margin clears -tol. margin is that
// optimum (positive margins certify strict interiority in every direction
// except the pinned diagonal), and the certificate is populated only on
// membership. For the quadratic cone the matrix-part submodularity gate is
// checked first; when it fails, no program is solved and margin reports the
// negated worst off-diagonal.
struct KConeCheck {
  bool member = false;
  double margin = 0.0;
  std::optional<Vec> Z;  // row-major n*n auxiliary matrix, not symmetric
};

struct MConeCheck {
  bool member = false;
  double margin = 0.0;
  std::optional<SymMatrix> W;  // second-moment completion certificate
};

// Membership of (y0, y, Y) in the cone of quadratics nonnegative on [0,1]^n
// with submodular Y. Throws Error if the margin program fails to solve.
KConeCheck k_cone_member(const ConePoint& pt, double tol);

// Membership of (lambda0, lambda, Lambda) in the cone of moments of
// nonnegative measures on [0,1]^n with entrywise-lower-bounded off-diagonal
// second moments. Throws Error if the margin program fails to solve.
MConeCheck m_cone_member(const ConePoint& pt, double tol);

// Nonemptiness of the lower-bounded ambiguity set: membership of
// (1, mu, sigma) in the measure-moment cone at tolerance 1e-8. The W
// certificate satisfies sigma <= W <= mu e', diag(W) = diag(sigma), and
// [[1, mu'], [mu, W]] psd, all within 1e-8.
MConeCheck p_nonempty(const MomentSpec& spec);

// Nonemptiness of the Delage-Ye-style set: mu in [0,1]^n and
// [[1, mu'], [mu, sigma]] psd within 1e-9. Closed form; never throws.
bool q_nonempty(const MomentSpec& spec);

// One piece of a piecewise-quadratic cost in xi with coefficients that
// depend affinely on the decision x:
//   A(x) = A0 + sum_l x_l Ax[l],  b(x) = b0 + sum_l x_l bx[l],
//   c(x) = c0 + cx . x,
// and the piece's value at (x, xi) is xi' A(x) xi + b(x)' xi + c(x).
struct QuadPiece {
  SymMatrix A0;
  std::vector<SymMatrix> Ax;
  Vec b0;
  std::vector<Vec> bx;
  double c0 = 0.0;
  Vec cx;
};

// An affine-in-x semidefinite requirement F0 + sum_l x_l Fx[l] psd on the
// decision set.
struct DecisionPsd {
  SymMatrix F0;
  std::vector<SymMatrix> Fx;
};

// Cost max_k { xi' A_k(x) xi + b_k(x)' xi + c_k(x) } over K >= 1 pieces,
// together with the decision set: finite box bounds lo <= x <= hi (required;
// they keep the set compact), optional linear inequalities G x <= h and
// equalities E x = d, and optional semidefinite rows. m == 0 means the cost
// has no decision and the solve is a pure worst-case expectation.
struct PiecewiseQuadratic {
  std::size_t n = 0;  // dimension of xi
  std::size_t m = 0;  // decision dimension
  std::vector<QuadPiece> pieces;
  Vec lo, hi;
  std::vector<Vec> G;
  Vec h;
  std::vector<Vec> E;
  Vec d;
  std::vector<DecisionPsd> psd;

  void check_shape() const;
};

// Minimized worst-case expected cost with the dual certificate that proves
// the bound: the quadratic (y0, y, Y) dominates every piece on [0,1]^n, and
// either the per-piece auxiliary matrices Z (lower-bounded set) or the
// per-piece multipliers z, w (Delage-Ye set) witness the domination.
struct DroResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = 0.0;  // NaN unless status is Optimal
  Vec x;               // optimal decision, empty when m == 0
  double y0 = 0.0;
  Vec y;
  SymMatrix Y;
  std::vector<Vec> Z;     // lower-bounded set: row-major n*n per piece
  std::vector<Vec> z, w;  // Delage-Ye set: length-n multipliers per piece
  // Lower-bounded set only: feasibility margin of the moment system at the
  // spec. Values >= 1e-6 certify the strict-interior condition that the
  // exactness argument needs; nonemptiness alone is what is enforced.
  double moment_margin = 0.0;
  ConicSolution conic;  // raw solver output for audit
};

// Worst-case expected cost over the lower-bounded ambiguity set, minimized
// over the decision box. Preconditions (PreconditionViolated names the
// failing clause): (a) finite decision box; (b) -A_k(x) submodular for all
// feasible x, checked structurally when decision-dependent off-diagonals
// vanish and otherwise verified at the returned decision; (c) nonempty
// ambiguity set. Dual feasibility of the returned certificate is re-verified
// to 1e-7 and a violation throws Error.
DroResult solve_dro_p(const MomentSpec& spec, const PiecewiseQuadratic& f,
                      const SolverSettings& settings = SolverSettings{});

// Worst-case expected cost over the Delage-Ye-style set. Preconditions:
// finite decision box ("box"), nonempty set ("nonempty"), and A_k negative
// semidefinite at the returned decision ("nsd"). Dual feasibility is
// re-verified as for the lower-bounded set.
DroResult solve_dro_q(const MomentSpec& spec, const PiecewiseQuadratic& f,
                      const SolverSettings& settings = SolverSettings{});

}  // namespace qsmbox
