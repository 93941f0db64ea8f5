#include "qsmbox/graphs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/covbound.hpp"
#include "qsmbox/moments.hpp"
#include "qsmbox/prng.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

const char* to_string(GraphKind k) {
  switch (k) {
    case GraphKind::Path: return "path";
    case GraphKind::Star: return "star";
    case GraphKind::Complete: return "complete";
    case GraphKind::Custom: return "custom";
  }
  return "unknown";
}

GraphKind parse_graph_kind(const std::string& s) {
  if (s == "path") return GraphKind::Path;
  if (s == "star") return GraphKind::Star;
  if (s == "complete") return GraphKind::Complete;
  if (s == "custom") return GraphKind::Custom;
  throw ParseError("unknown graph kind \"" + s + "\"");
}

const char* to_string(Ambiguity a) {
  return a == Ambiguity::LowerBounded ? "p" : "q";
}

Ambiguity parse_ambiguity(const std::string& s) {
  if (s == "p" || s == "P") return Ambiguity::LowerBounded;
  if (s == "q" || s == "Q") return Ambiguity::DelageYe;
  throw ParseError("unknown ambiguity set \"" + s + "\" (expected \"p\" or \"q\")");
}

void Graph::check_valid() const {
  if (n == 0) throw Error("Graph: vertex count must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> canon;
  canon.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    if (a >= n || b >= n) throw Error("Graph: edge endpoint out of range");
    if (a == b) throw Error("Graph: self-loop");
    canon.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(canon.begin(), canon.end());
  if (std::adjacent_find(canon.begin(), canon.end()) != canon.end())
    throw Error("Graph: duplicate edge");
}

Graph path_graph(std::size_t n) {
  if (n == 0) throw Error("path_graph: vertex count must be positive");
  Graph g;
  g.n = n;
  g.kind = GraphKind::Path;
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  return g;
}

Graph star_graph(std::size_t n) {
  if (n == 0) throw Error("star_graph: vertex count must be positive");
  Graph g;
  g.n = n;
  g.kind = GraphKind::Star;
  for (std::size_t i = 1; i < n; ++i) g.edges.emplace_back(0, i);
  return g;
}

Graph complete_graph(std::size_t n) {
  if (n == 0) throw Error("complete_graph: vertex count must be positive");
  Graph g;
  g.n = n;
  g.kind = GraphKind::Complete;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.edges.emplace_back(i, j);
  return g;
}

Graph make_graph(GraphKind kind, std::size_t n) {
  switch (kind) {
    case GraphKind::Path: return path_graph(n);
    case GraphKind::Star: return star_graph(n);
    case GraphKind::Complete: return complete_graph(n);
    case GraphKind::Custom: break;
  }
  throw PreconditionViolated("kind", "make_graph: custom graphs have no canonical edge set");
}

SymMatrix laplacian(const Graph& g) {
  g.check_valid();
  SymMatrix L(g.n);
  for (const auto& [i, j] : g.edges) {
    L.add(i, i, 1.0);
    L.add(j, j, 1.0);
    L.add(i, j, -1.0);
  }
  return L;
}

double energy(const Graph& g, const Vec& xi) {
  if (xi.size() != g.n)
    throw DimensionError("energy: vector length does not match the vertex count");
  double acc = 0.0;
  for (const auto& [i, j] : g.edges) {
    const double d = xi[i] - xi[j];
    acc += d * d;
  }
  return acc;
}

namespace {

SymMatrix scaled(const SymMatrix& m, double factor) {
  SymMatrix out(m.n());
  for (std::size_t i = 0; i < m.n(); ++i)
    for (std::size_t j = 0; j <= i; ++j) out.set(i, j, factor * m(i, j));
  return out;
}

// Runs task(i) for every i in [0, count) on up to `workers` threads pulling
// indices from a shared counter. Each task's exception is captured at its
// index; once the queue drains (remaining tasks are skipped after a failure
// is seen), the lowest captured index is rethrown.
void run_indexed(std::size_t count, std::size_t workers,
                 const std::function<void(std::size_t)>& task) {
  if (count == 0) return;
  workers = std::min(std::max<std::size_t>(workers, 1), count);
  std::vector<std::exception_ptr> errors(count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        while (!failed.load(std::memory_order_relaxed)) {
          const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
          if (i >= count) return;
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
            failed.store(true, std::memory_order_relaxed);
          }
        }
      });
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_array(std::string& out, const Vec& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    append_number(out, v[i]);
  }
  out += ']';
}

// Everything needed to replay one batch instance by hand, as a JSON line.
std::string serialize_instance(GraphKind kind, std::size_t n, std::uint64_t seed,
                               std::size_t index, const MeanStd& ms) {
  std::string out = "{\"kind\":\"";
  out += to_string(kind);
  out += "\",\"n\":" + std::to_string(n);
  out += ",\"seed\":" + std::to_string(seed);
  out += ",\"instance\":" + std::to_string(index);
  out += ",\"mu\":";
  append_array(out, ms.mu);
  out += ",\"sigma\":";
  append_array(out, ms.sigma);
  out += '}';
  return out;
}

MeanStd draw_marginals(Prng& rng, std::size_t n) {
  MeanStd ms;
  ms.mu.resize(n);
  ms.sigma.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double mu = rng.uniform();
    ms.mu[j] = mu;
    ms.sigma[j] = rng.uniform() * std::sqrt(mu * (1.0 - mu));
  }
  return ms;
}

// Below this, an optimal value is treated as zero energy: the percentage gap
// is ill-conditioned there, so the instance is redrawn instead of scored.
constexpr double kZeroEnergy = 1e-7;

}  // namespace

double min_expected_energy(const Graph& g, const MeanStd& ms,
                           const SolverSettings& settings) {
  const SymMatrix L = laplacian(g);
  const CovBound bound = solve_cov_bound(scaled(L, -1.0), ms, settings);
  if (bound.status != SolveStatus::Optimal)
    throw Error(std::string("min_expected_energy: bound solve ended with status ") +
                to_string(bound.status));
  return std::max(0.0, -bound.value);
}

GapStats gap_experiment(GraphKind kind, std::size_t n, std::size_t instances,
                        std::uint64_t seed, std::size_t workers,
                        const SolverSettings& settings) {
  if (kind == GraphKind::Custom)
    throw PreconditionViolated("kind", "gap_experiment: needs a named graph family");
  if (n < 2)
    throw PreconditionViolated("n", "gap_experiment: needs at least two vertices");
  if (instances == 0)
    throw PreconditionViolated("instances", "gap_experiment: needs at least one instance");

  const Graph g = make_graph(kind, n);
  const SymMatrix L = laplacian(g);
  const Prng base{seed};

  struct Outcome {
    double gap = 0.0;
    std::size_t redrawn = 0;
  };
  std::vector<Outcome> out(instances);
  run_indexed(instances, workers, [&](std::size_t i) {
    Prng rng = base.substream(i);
    // The redraw loop stays inside the instance's own substream, so outcomes
    // do not depend on other instances or on the worker count. A bounded
    // number of attempts guards against degenerate marginals pinning the
    // energy at zero forever, which no continuous draw should ever do.
    for (int attempt = 0; attempt < 64; ++attempt) {
      const MeanStd ms = draw_marginals(rng, n);
      double exact;
      try {
        exact = min_expected_energy(g, ms, settings);
      } catch (const Error& err) {
        throw Error(std::string(err.what()) +
                    "; failing instance: " + serialize_instance(kind, n, seed, i, ms));
      }
      if (exact <= kZeroEnergy) {
        ++out[i].redrawn;
        continue;
      }
      const double lower = pairwise_energy_lower_bound(L, ms);
      if (lower > exact + 1e-7 * (1.0 + exact))
        throw Error("gap_experiment: pairwise bound exceeds the exact value; failing instance: " +
                    serialize_instance(kind, n, seed, i, ms));
      out[i].gap = std::max(0.0, (exact - lower) / exact * 100.0);
      return;
    }
    throw Error("gap_experiment: instance " + std::to_string(i) +
                " kept drawing zero-energy marginals (seed " + std::to_string(seed) + ")");
  });

  GapStats stats;
  stats.kind = kind;
  stats.n = n;
  stats.instances = instances;
  stats.seed = seed;
  double mean = 0.0;
  for (const Outcome& o : out) {
    mean += o.gap;
    stats.redrawn += o.redrawn;
  }
  mean /= static_cast<double>(instances);
  double sumsq = 0.0;
  for (const Outcome& o : out) {
    const double d = o.gap - mean;
    sumsq += d * d;
  }
  stats.mean_pct = mean;
  stats.std_pct =
      instances > 1 ? std::sqrt(sumsq / static_cast<double>(instances - 1)) : 0.0;
  return stats;
}

std::vector<SubquantilePoint> subquantile_curve(const Graph& g,
                                                const SubquantileQuery& q,
                                                std::size_t workers,
                                                const SolverSettings& settings) {
  g.check_valid();
  q.moments.check_shape();
  if (q.moments.n() != g.n)
    throw DimensionError("subquantile_curve: moment spec dimension does not match the graph");
  for (double a : q.alphas)
    if (!(a >= 0.0 && a < 1.0))
      throw PreconditionViolated("alpha", "subquantile_curve: levels must lie in [0,1)");
  if (!(q.x_max >= 0.0))
    throw PreconditionViolated("x_max", "subquantile_curve: threshold bound must be nonnegative");
  if (q.ambiguity == Ambiguity::LowerBounded) {
    if (!p_nonempty(q.moments).member)
      throw PreconditionViolated("nonempty",
                                 "subquantile_curve: the lower-bounded ambiguity set is empty");
  } else if (!q_nonempty(q.moments)) {
    throw PreconditionViolated("nonempty",
                               "subquantile_curve: the Delage-Ye ambiguity set is empty");
  }

  const SymMatrix L = laplacian(g);
  std::vector<SubquantilePoint> curve(q.alphas.size());
  run_indexed(q.alphas.size(), workers, [&](std::size_t k) {
    const double alpha = q.alphas[k];
    const double c = 1.0 / (1.0 - alpha);
    // Cost in (t, xi): c * max(0, t - energy(xi)) - t, i.e. the two pieces
    // -t and -c xi' L xi + (c - 1) t. Minimizing its worst-case expectation
    // over t in [0, x_max] and negating the optimum gives the lower-tail
    // expectation of the energy at this level.
    PiecewiseQuadratic f;
    f.n = g.n;
    f.m = 1;
    QuadPiece flat;
    flat.A0 = SymMatrix(g.n);
    flat.Ax = {SymMatrix(g.n)};
    flat.b0 = Vec(g.n, 0.0);
    flat.bx = {Vec(g.n, 0.0)};
    flat.c0 = 0.0;
    flat.cx = {-1.0};
    QuadPiece active = flat;
    active.A0 = scaled(L, -c);
    active.cx = {c - 1.0};
    f.pieces = {flat, active};
    f.lo = {0.0};
    f.hi = {q.x_max};
    const DroResult r = q.ambiguity == Ambiguity::LowerBounded
                            ? solve_dro_p(q.moments, f, settings)
                            : solve_dro_q(q.moments, f, settings);
    if (r.status != SolveStatus::Optimal) {
      std::string msg = "subquantile_curve: solve at level ";
      append_number(msg, alpha);
      msg += std::string(" ended with status ") + to_string(r.status);
      throw Error(msg);
    }
    curve[k] = {alpha, -r.value};
  });
  return curve;
}

MomentSpec uniform_iid_moments(std::size_t n) {
  if (n == 0) throw DimensionError("uniform_iid_moments: dimension must be positive");
  MomentSpec spec;
  spec.mu = Vec(n, 0.5);
  spec.sigma = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) spec.sigma.set(i, j, i == j ? 1.0 / 3.0 : 0.25);
  return spec;
}

}  // namespace qsmbox
