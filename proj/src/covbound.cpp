#include "qsmbox/covbound.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/model.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

void MeanStd::check_shape() const {
  if (mu.empty()) throw DimensionError("MeanStd: dimension must be positive");
  if (sigma.size() != mu.size())
    throw DimensionError("MeanStd: sigma length does not match mu length");
}

void DiscreteDistribution::check_valid() const {
  if (points.empty()) throw Error("DiscreteDistribution: no support points");
  if (probs.size() != points.size())
    throw Error("DiscreteDistribution: probability count does not match points");
  const std::size_t n = points.front().size();
  double total = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].size() != n)
      throw Error("DiscreteDistribution: support points differ in dimension");
    for (double v : points[k])
      if (v < -1e-12 || v > 1.0 + 1e-12)
        throw Error("DiscreteDistribution: support point outside [0,1]^n");
    if (probs[k] < 0.0) throw Error("DiscreteDistribution: negative probability");
    total += probs[k];
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error("DiscreteDistribution: probabilities do not sum to 1");
}

double DiscreteDistribution::mean(std::size_t i) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) acc += probs[k] * points[k][i];
  return acc;
}

double DiscreteDistribution::second_moment(std::size_t i, std::size_t j) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k)
    acc += probs[k] * points[k][i] * points[k][j];
  return acc;
}

bool mean_std_feasible(const MeanStd& ms) {
  ms.check_shape();
  for (std::size_t i = 0; i < ms.n(); ++i) {
    if (ms.sigma[i] < -1e-12) return false;
    const double cap = ms.mu[i] * (1.0 - ms.mu[i]);
    if (cap < -1e-12) return false;  // mean outside the box
    if (ms.sigma[i] > std::sqrt(std::max(cap, 0.0)) + 1e-12) return false;
  }
  return true;
}

namespace {

// Admissible range for the upper-point probability of a two-point
// distribution on [0,1] with the given mean and (positive) deviation.
double p_low(double mu, double sigma) {
  return sigma * sigma / ((1.0 - mu) * (1.0 - mu) + sigma * sigma);
}

double p_high(double mu, double sigma) {
  return mu * mu / (mu * mu + sigma * sigma);
}

void require_feasible(const MeanStd& ms, const char* who) {
  if (!mean_std_feasible(ms))
    throw PreconditionViolated(
        "feasible", std::string(who) +
                        ": no distribution on the unit box has these means "
                        "and standard deviations");
}

// Support points of the extremal constructions live in [0,1] exactly; the
// clamp strips the rounding drift the closed-form coordinates pick up.
double unit_clamp(double v) { return std::min(std::max(v, 0.0), 1.0); }

}  // namespace

CovBound solve_cov_bound(const SymMatrix& A, const MeanStd& ms,
                         const SolverSettings& settings) {
  ms.check_shape();
  const std::size_t n = ms.n();
  if (A.n() != n)
    throw DimensionError("solve_cov_bound: matrix order does not match marginals");
  if (!mean_std_feasible(ms))
    throw PreconditionViolated(
        "a",
        "solve_cov_bound: no distribution on the unit box has these means "
        "and standard deviations");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (A(i, j) < 0.0)
        throw PreconditionViolated(
            "b",
            "solve_cov_bound: negated matrix must be submodular (objective "
            "off-diagonals must be nonnegative)");

  // Bordered block S = [[1, mu^T], [mu, Sigma]]; maximize A . Sigma as
  // min (-A) . Sigma.
  ModelBuilder mb;
  PsdBlockRef B = mb.add_psd(n + 1);
  SymMatrix negA(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) negA.set(i, j, -A(i, j));
  mb.obj_psd_matrix(B, bordered(0.0, Vec(n, 0.0), negA));

  std::size_t r = mb.begin_row(1.0);
  mb.add_psd_entry(r, B, 0, 0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    r = mb.begin_row(ms.mu[i]);
    mb.add_psd_entry(r, B, 0, i + 1, 1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    r = mb.begin_row(ms.mu[i] * ms.mu[i] + ms.sigma[i] * ms.sigma[i]);
    mb.add_psd_entry(r, B, i + 1, i + 1, 1.0);
  }
  // Entrywise cap Sigma_ij <= mu_j; both orientations of each pair, so the
  // cap ends up min(mu_i, mu_j). Diagonal entries are skipped: they are
  // pinned to mu_i^2 + sigma_i^2 <= mu_i by the equality rows above, and a
  // redundant inequality there would have identically-zero slack whenever
  // sigma_i sits at the deviation cap, destroying the strict interior the
  // solver needs.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      r = mb.begin_row(ms.mu[j], RowSense::Le);
      mb.add_psd_entry(r, B, i + 1, j + 1, 1.0);
    }

  BuiltProgram built = mb.take();
  ConicSolution sol = solve_conic(built.program, settings);

  CovBound out;
  out.status = sol.status;
  if (sol.status != SolveStatus::Optimal) {
    out.value = std::numeric_limits<double>::quiet_NaN();
    out.conic = std::move(sol);
    return out;
  }
  out.value = -(sol.pobj + built.objective_constant);
  SymMatrix full = extract_psd(sol.z, B);
  out.sigma = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) out.sigma.set(i, j, full(i + 1, j + 1));
  out.conic = std::move(sol);
  return out;
}

double bivariate_bound(const MeanStd& ms) {
  ms.check_shape();
  if (ms.n() != 2)
    throw DimensionError("bivariate_bound: needs exactly two coordinates");
  require_feasible(ms, "bivariate_bound");
  return std::min({ms.mu[0], ms.mu[1],
                   ms.mu[0] * ms.mu[1] + ms.sigma[0] * ms.sigma[1]});
}

DiscreteDistribution two_point_marginal(double mu, double sigma, double p) {
  MeanStd one;
  one.mu = {mu};
  one.sigma = {sigma};
  require_feasible(one, "two_point_marginal");

  DiscreteDistribution d;
  if (sigma <= 0.0) {
    // Degenerate marginal: a point mass at the mean, any probability works.
    if (p < 0.0 || p > 1.0)
      throw PIntervalError("two_point_marginal: probability outside [0,1]");
    d.points = {Vec{mu}};
    d.probs = {1.0};
    return d;
  }

  const double lo = p_low(mu, sigma);
  const double hi = p_high(mu, sigma);
  if (p < lo - 1e-12 || p > hi + 1e-12)
    throw PIntervalError("two_point_marginal: probability " + std::to_string(p) +
                         " outside [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
  p = std::min(std::max(p, lo), hi);

  d.points = {Vec{unit_clamp(mu - sigma * std::sqrt(p / (1.0 - p)))},
              Vec{unit_clamp(mu + sigma * std::sqrt((1.0 - p) / p))}};
  d.probs = {1.0 - p, p};
  return d;
}

DiscreteDistribution extremal_bivariate(const MeanStd& ms) {
  ms.check_shape();
  if (ms.n() != 2)
    throw DimensionError("extremal_bivariate: needs exactly two coordinates");
  require_feasible(ms, "extremal_bivariate");
  const double m1 = ms.mu[0], m2 = ms.mu[1];
  const double s1 = ms.sigma[0], s2 = ms.sigma[1];

  DiscreteDistribution d;
  if (s1 <= 0.0 && s2 <= 0.0) {
    d.points = {Vec{m1, m2}};
    d.probs = {1.0};
    return d;
  }
  if (s1 <= 0.0 || s2 <= 0.0) {
    // One marginal is a point mass: pair it with a centered two-point
    // marginal for the other coordinate; the cross moment is mu_1 mu_2,
    // which is the bound when a deviation vanishes.
    const std::size_t v = (s1 <= 0.0) ? 1 : 0;  // the varying coordinate
    const double mv = ms.mu[v], sv = ms.sigma[v], mfix = ms.mu[1 - v];
    const double p = 0.5 * (p_low(mv, sv) + p_high(mv, sv));
    DiscreteDistribution marg = two_point_marginal(mv, sv, p);
    for (std::size_t k = 0; k < marg.points.size(); ++k) {
      Vec pt(2);
      pt[v] = marg.points[k][0];
      pt[1 - v] = mfix;
      d.points.push_back(pt);
    }
    d.probs = marg.probs;
    return d;
  }

  const double lo1 = p_low(m1, s1), hi1 = p_high(m1, s1);
  const double lo2 = p_low(m2, s2), hi2 = p_high(m2, s2);
  const double lap_lo = std::max(lo1, lo2);
  const double lap_hi = std::min(hi1, hi2);
  // The overlap test carries a tolerance: at the deviation cap the two range
  // endpoints agree exactly in real arithmetic but are computed by different
  // formulas, so the interval can come out inverted by an ulp.
  if (lap_lo <= lap_hi + 1e-12) {
    // Overlapping probability ranges: one shared upper-point probability
    // works for both marginals, giving a comonotone two-point joint with
    // cross moment mu_1 mu_2 + sigma_1 sigma_2. Midpoint keeps the choice
    // deterministic and centered (a single-point overlap still works).
    const double p = 0.5 * (lap_lo + lap_hi);
    const double drop = std::sqrt(p / (1.0 - p));
    const double lift = std::sqrt((1.0 - p) / p);
    d.points = {Vec{unit_clamp(m1 - s1 * drop), unit_clamp(m2 - s2 * drop)},
                Vec{unit_clamp(m1 + s1 * lift), unit_clamp(m2 + s2 * lift)}};
    d.probs = {1.0 - p, p};
    return d;
  }

  // Disjoint ranges: a comonotone three-point joint attains the smaller
  // mean. With [lo1,hi1] entirely left of [lo2,hi2], coordinate 1 sits at
  // its extreme two-point marginal (p = hi1: support {0, m1 + s1^2/m1}) and
  // coordinate 2 at p = lo2 (support {(m2 - m2^2 - s2^2)/(1 - m2), 1});
  // gluing them comonotonically needs the middle point (0, 1). The mirror
  // case swaps coordinates.
  // Left range by the larger separation, so the middle weight below is a
  // difference of ordered values and cannot round negative.
  const std::size_t a = (lo2 - hi1 >= lo1 - hi2) ? 0 : 1;
  const std::size_t b = 1 - a;
  const double ma = ms.mu[a], sa = ms.sigma[a];
  const double mb_ = ms.mu[b], sb = ms.sigma[b];
  const double pa = p_high(ma, sa);
  const double pb = p_low(mb_, sb);
  Vec p0(2), p1(2), p2(2);
  p0[a] = 0.0;
  p0[b] = unit_clamp((mb_ - mb_ * mb_ - sb * sb) / (1.0 - mb_));
  p1[a] = 0.0;
  p1[b] = 1.0;
  p2[a] = unit_clamp(ma + sa * sa / ma);
  p2[b] = 1.0;
  d.points = {p0, p1, p2};
  d.probs = {1.0 - pb, pb - pa, pa};
  return d;
}

double pairwise_energy_lower_bound(const SymMatrix& L, const MeanStd& ms) {
  ms.check_shape();
  const std::size_t n = ms.n();
  if (L.n() != n)
    throw DimensionError(
        "pairwise_energy_lower_bound: matrix order does not match marginals");
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(L(i, j)));
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += L(i, j);
      if (i != j && L(i, j) > 1e-12 * (1.0 + scale))
        throw PreconditionViolated(
            "laplacian",
            "pairwise_energy_lower_bound: positive off-diagonal entry");
    }
    if (std::abs(row) > 1e-9 * (1.0 + scale))
      throw PreconditionViolated(
          "laplacian", "pairwise_energy_lower_bound: row sums must vanish");
  }
  require_feasible(ms, "pairwise_energy_lower_bound");

  // Per edge (weight w): E[w (xi_i - xi_j)^2] >= w (sigma_i^2 + sigma_j^2
  // + (mu_i - mu_j)^2 - 2 (bound_ij - mu_i mu_j)), using the exact bivariate
  // cross-moment bound for the pair.
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = -L(i, j);
      if (w <= 0.0) continue;
      MeanStd pair;
      pair.mu = {ms.mu[i], ms.mu[j]};
      pair.sigma = {ms.sigma[i], ms.sigma[j]};
      const double bb = bivariate_bound(pair);
      const double di = ms.mu[i] - ms.mu[j];
      total += w * (ms.sigma[i] * ms.sigma[i] + ms.sigma[j] * ms.sigma[j] +
                    di * di - 2.0 * (bb - ms.mu[i] * ms.mu[j]));
    }
  return total;
}

}  // namespace qsmbox
