// Tight expectation bounds for quadratic forms when only marginal means and
// standard deviations are known and the support is the unit box: a
// feasibility test for the marginal data, the bound-computing semidefinite
// program, a closed form for the bivariate cross moment together with
// explicit extremal distributions attaining it, and the pairwise lower
// bound those induce on expected graph energies.
#pragma once

#include <cstddef>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

// Marginal moment data: means in [0,1] and nonnegative standard deviations.
struct MeanStd {
  Vec mu;
  Vec sigma;

  std::size_t n() const { return mu.size(); }
  // Throws DimensionError when mu and sigma disagree in length.
  void check_shape() const;
};

// Finitely supported distribution on the unit box.
struct DiscreteDistribution {
  std::vector<Vec> points;
  Vec probs;

  // Throws Error unless every probability is nonnegative, the probabilities
  // sum to 1 within 1e-12, every support point lies in [0,1]^n within
  // 1e-12, and all points share one dimension.
  void check_valid() const;

  double mean(std::size_t i) const;
  double second_moment(std::size_t i, std::size_t j) const;
};

// True when some distribution on [0,1]^n has the given means and standard
// deviations: each sigma_i must fit under sqrt(mu_i (1 - mu_i)), with 1e-12
// slack on the boundary.
bool mean_std_feasible(const MeanStd& ms);

// Output of solve_cov_bound: the bound value and a maximizing second-moment
// matrix, plus the raw conic solution for diagnostics.
struct CovBound {
  SolveStatus status = SolveStatus::NumericalFailure;
  double value = 0.0;  // NaN unless status == Optimal
  SymMatrix sigma;     // optimal E[xi xi^T] when status == Optimal
  ConicSolution conic;
};

// Tightest upper bound on E[xi^T A xi] over distributions on [0,1]^n with
// marginals ms: maximizes A . S over second-moment matrices S with diagonal
// pinned to mu_i^2 + sigma_i^2, S_ij <= mu_j entrywise, and the mean-
// bordered matrix positive semidefinite. Preconditions: (a) ms is feasible,
// (b) -A is submodular, i.e. A has no negative off-diagonal entry;
// violations throw PreconditionViolated with `which` = "a" / "b".
CovBound solve_cov_bound(const SymMatrix& A, const MeanStd& ms,
                         const SolverSettings& settings = SolverSettings{});

// Closed form of that bound for n = 2 and the cross-moment objective
// (A = [[0,1/2],[1/2,0]]): the largest E[xi_1 xi_2] is
// min(mu_1, mu_2, mu_1 mu_2 + sigma_1 sigma_2).
// Throws PreconditionViolated("feasible", ...) when ms is infeasible.
double bivariate_bound(const MeanStd& ms);

// A distribution on [0,1]^2 attaining bivariate_bound: a comonotone
// two-point distribution when the marginals' admissible upper-probability
// intervals overlap, a comonotone three-point distribution otherwise; a
// zero-sigma marginal collapses to a point mass first.
DiscreteDistribution extremal_bivariate(const MeanStd& ms);

// The two-point distribution on [0,1] with mean mu and standard deviation
// sigma whose upper point carries probability p. p must lie in
// [sigma^2/((1-mu)^2+sigma^2), mu^2/(mu^2+sigma^2)] (the range keeping both
// points inside [0,1]); outside it throws PIntervalError. sigma = 0
// collapses to a point mass at mu for any p in [0,1].
DiscreteDistribution two_point_marginal(double mu, double sigma, double p);

// Sum over edges of the exact bivariate lower bound on E[(xi_i - xi_j)^2],
// weighted by the edge weights of the Laplacian L: a lower bound on the
// least expected quadratic energy consistent with the marginals. L must
// have nonpositive off-diagonal entries and zero row sums
// (PreconditionViolated("laplacian", ...) otherwise).
double pairwise_energy_lower_bound(const SymMatrix& L, const MeanStd& ms);

}  // namespace qsmbox
