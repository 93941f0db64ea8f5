// Graph Laplacians, quadratic graph energy, and the two experiment drivers
// built on them: a batch study of the gap between the exact least expected
// energy and its pairwise lower bound, and worst-case lower-tail expectation
// curves of the energy over each moment ambiguity set. Batch instances and
// grid points run on a small work queue with a caller-chosen worker count;
// results are deterministic in the seed regardless of scheduling.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/covbound.hpp"
#include "qsmbox/moments.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

enum class GraphKind { Path, Star, Complete, Custom };

const char* to_string(GraphKind k);
// Accepts "path", "star", "complete", "custom"; throws ParseError otherwise.
GraphKind parse_graph_kind(const std::string& s);

// Simple undirected graph: vertices 0..n-1 and an edge list of unordered
// pairs. The kind tag records which named family built it, if any.
struct Graph {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  GraphKind kind = GraphKind::Custom;

  // Throws Error on an empty vertex set, an endpoint out of range, a
  // self-loop, or a duplicate edge (in either orientation).
  void check_valid() const;
};

// The three named families. Vertex counts must be positive; the star is
// centered on vertex 0.
Graph path_graph(std::size_t n);
Graph star_graph(std::size_t n);
Graph complete_graph(std::size_t n);
// Dispatch by kind; Custom has no canonical edge set and throws
// PreconditionViolated("kind", ...).
Graph make_graph(GraphKind kind, std::size_t n);

// Graph Laplacian: vertex degree on the diagonal, -1 in entry (i, j) for
// each edge. Row sums are zero, so the matrix is diagonally dominant, hence
// positive semidefinite, and its off-diagonal entries are nonpositive.
SymMatrix laplacian(const Graph& g);

// Quadratic energy xi' L xi, evaluated as the edge sum over (xi_i - xi_j)^2.
double energy(const Graph& g, const Vec& xi);

// Least expected energy over all distributions on [0,1]^n with the given
// marginal means and standard deviations: the tight bound on the expectation
// of -energy, negated, with tiny negative roundoff clamped to zero.
// Infeasible marginals throw PreconditionViolated; a solve that ends in any
// state but Optimal throws Error.
double min_expected_energy(const Graph& g, const MeanStd& ms,
                           const SolverSettings& settings = SolverSettings{});

// Batch statistics of the percentage gap between the least expected energy
// e and its pairwise lower bound, gap = (e - lb) / e * 100, over randomly
// drawn marginal instances. mean_pct / std_pct are the sample mean and
// sample standard deviation of the per-instance gaps (tiny negative gaps
// from roundoff are clamped to zero before aggregation).
struct GapStats {
  GraphKind kind = GraphKind::Custom;
  std::size_t n = 0;
  std::size_t instances = 0;  // gaps measured, after redraws
  std::uint64_t seed = 0;
  std::size_t redrawn = 0;  // near-zero-energy draws that were replaced
  double mean_pct = 0.0;
  double std_pct = 0.0;
};

// Runs `instances` random marginal draws on the named graph family and
// aggregates the percentage gaps. Each instance draws mu_i uniform on [0,1]
// and sigma_i a uniform fraction of the largest deviation a mean-mu_i
// distribution on [0,1] admits, from a per-instance substream of the seed,
// so output is identical for any worker count. Draws whose least expected
// energy is below 1e-7 are redrawn (the percentage gap is ill-conditioned
// at zero) and counted in `redrawn`. A solver failure, or a pairwise bound
// exceeding the exact value beyond roundoff, aborts the batch with an Error
// that serializes the offending instance for replay.
GapStats gap_experiment(GraphKind kind, std::size_t n, std::size_t instances,
                        std::uint64_t seed, std::size_t workers = 1,
                        const SolverSettings& settings = SolverSettings{});

// Which moment ambiguity set a query ranges over: the lower-bounded set
// (entrywise cross-moment lower bounds; short name "p") or the Delage-Ye
// style set (semidefinite second-moment upper bound; short name "q").
enum class Ambiguity { LowerBounded, DelageYe };

const char* to_string(Ambiguity a);
// Accepts "p" or "q" (case-insensitive); throws ParseError otherwise.
Ambiguity parse_ambiguity(const std::string& s);

// Query for worst-case lower-tail expectation curves: for each level alpha
// in [0, 1), the least value over the ambiguity set of the expectation of
// the energy restricted to its lower (1 - alpha)-tail. x_max bounds the
// threshold decision variable and must be at least the largest energy the
// support admits for the reduction to be loss-free; the edge count is such
// a bound, since each edge contributes at most 1 on the unit box.
struct SubquantileQuery {
  Vec alphas;
  Ambiguity ambiguity = Ambiguity::LowerBounded;
  MomentSpec moments;
  double x_max = 0.0;
};

struct SubquantilePoint {
  double alpha = 0.0;
  double bound = 0.0;
};

// Evaluates the query's curve, one joint conic solve per grid point: the
// lower-tail expectation at level alpha is
//   max over t in [0, x_max] of  t - E[max(0, t - energy)] / (1 - alpha)
// with the inner worst-case expectation taken over the selected ambiguity
// set, and the whole expression solved as a single two-piece program with t
// a box-bounded decision. At alpha = 0 this reduces to the least expected
// energy over the set. Throws PreconditionViolated for alpha outside [0,1),
// negative x_max, a moment spec of the wrong dimension, or an empty
// ambiguity set; a solve that ends in any state but Optimal throws Error
// naming the grid point.
std::vector<SubquantilePoint> subquantile_curve(
    const Graph& g, const SubquantileQuery& q, std::size_t workers = 1,
    const SolverSettings& settings = SolverSettings{});

// First two moments of the independent uniform random vector on [0,1]^n:
// means 1/2, second moments 1/3 on the diagonal and 1/4 off it.
MomentSpec uniform_iid_moments(std::size_t n);

}  // namespace qsmbox
