#include "qsmbox/qsmb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qsmbox {

void QsmbProblem::check_shape() const {
  if (Q.n() != c.size())
    throw DimensionError("QsmbProblem: Q order and c length differ");
}

double evaluate_qp(const QsmbProblem& p, const Vec& x) {
  p.check_shape();
  if (x.size() != p.n()) throw DimensionError("evaluate_qp: point length != n");
  const Vec qx = p.Q.mul(x);
  return dot(x, qx) + dot(p.c, x) + p.kappa;
}

// ---------------------------------------------------------------------------
// Relaxation lowering. Coordinates live in one PSD(n+1) block
//   B = [[1, x'], [x, X]],
// with the corner pinned by an equality row; each inequality family is one
// Le/Ge row per matrix entry.

BuiltProgram build_relaxation(const QsmbProblem& p, RelaxKind kind) {
  p.check_shape();
  const std::size_t n = p.n();
  ModelBuilder mb;
  const PsdBlockRef B = mb.add_psd(n + 1);

  const std::size_t pin = mb.begin_row(1.0, RowSense::Eq);
  mb.add_psd_entry(pin, B, 0, 0, 1.0);

  SymMatrix cost(n + 1);
  for (std::size_t j = 0; j < n; ++j) cost.set(j + 1, 0, 0.5 * p.c[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) cost.set(i + 1, j + 1, p.Q(i, j));
  mb.obj_psd_matrix(B, cost);
  mb.obj_constant(p.kappa);

  const auto add_upper = [&](std::size_t i, std::size_t j, std::size_t bound) {
    // X_ij <= x_bound.
    const std::size_t r = mb.begin_row(0.0, RowSense::Le);
    mb.add_psd_entry(r, B, i + 1, j + 1, 1.0);
    mb.add_psd_entry(r, B, bound + 1, 0, -1.0);
  };

  switch (kind) {
    case RelaxKind::Basic:
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t r = mb.begin_row(1.0, RowSense::Le);
        mb.add_psd_entry(r, B, j + 1, j + 1, 1.0);
      }
      break;
    case RelaxKind::TightRlt:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) add_upper(i, j, i);
      break;
    case RelaxKind::FullRlt:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) add_upper(i, j, i);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) add_upper(i, j, j);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
          const std::size_t r = mb.begin_row(0.0, RowSense::Ge);
          mb.add_psd_entry(r, B, i + 1, j + 1, 1.0);
        }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
          // X_ij >= x_i + x_j - 1 (the coefficient accumulates to -2 x_i
          // on the diagonal).
          const std::size_t r = mb.begin_row(-1.0, RowSense::Ge);
          mb.add_psd_entry(r, B, i + 1, j + 1, 1.0);
          mb.add_psd_entry(r, B, i + 1, 0, -1.0);
          mb.add_psd_entry(r, B, j + 1, 0, -1.0);
        }
      break;
  }
  return mb.take();
}

QsmbResult solve_qsmb(const QsmbProblem& p, RelaxKind kind,
                      const SolverSettings& s, bool compare_oracle) {
  const std::size_t n = p.n();
  BuiltProgram bp = build_relaxation(p, kind);
  ConicSolution sol = solve_conic(bp.program, s);

  QsmbResult res;
  res.status = sol.status;
  res.value = sol.pobj + bp.objective_constant;

  const PsdBlockRef B{0, n + 1, 0};
  SymMatrix moment = extract_psd(sol.z, B);
  res.x.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) res.x[j] = moment(j + 1, 0);
  res.X = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) res.X.set(i, j, moment(i + 1, j + 1));

  const EigResult em = eig_sym(moment);
  const double lmax = std::max(em.values.back(), 0.0);
  int rank = 0;
  for (double l : em.values)
    if (l > 1e-6 * lmax) ++rank;
  res.moment_rank = rank;

  if (compare_oracle && res.status == SolveStatus::Optimal && n <= 12) {
    const OraclePoint truth = oracle_global_min(p);
    res.tight =
        std::abs(res.value - truth.value) <= 1e-5 * (1.0 + std::abs(truth.value));
  }

  res.conic = std::move(sol);
  return res;
}

// ---------------------------------------------------------------------------
// Recovery.

namespace {

Vec clip_box(Vec x) {
  for (double& v : x) v = std::min(1.0, std::max(0.0, v));
  return x;
}

bool value_matches(double v, double target) {
  return std::abs(v - target) <= 1e-6 * (1.0 + std::abs(target));
}

std::optional<RecoveredPoint> try_candidate(const QsmbProblem& p, double target,
                                            Vec x, const char* method) {
  x = clip_box(std::move(x));
  const double v = evaluate_qp(p, x);
  if (!value_matches(v, target)) return std::nullopt;
  return RecoveredPoint{std::move(x), v, method};
}

std::optional<RecoveredPoint> recover_impl(const QsmbProblem& p,
                                           const QsmbResult& res, double tol,
                                           std::size_t depth) {
  if (res.status != SolveStatus::Optimal) return std::nullopt;
  const std::size_t n = p.n();
  const double target = res.value;

  // (i) Rank-1 moment matrix: the border column is itself optimal.
  if (res.moment_rank == 1) {
    if (auto r = try_candidate(p, target, res.x, "rank1")) return r;
  }

  // (ii) Nonpositive linear term: the square roots of the product diagonal
  // attain the relaxation value.
  bool c_nonpos = true;
  for (double cv : p.c)
    if (cv > 0.0) c_nonpos = false;
  if (c_nonpos) {
    Vec x(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      x[j] = std::sqrt(std::max(res.X(j, j), 0.0));
    if (auto r = try_candidate(p, target, std::move(x), "sqrt_diag")) return r;
  }

  // (iii) Boundary fixing: coordinates of x* already at the box boundary are
  // pinned and the reduced problem is re-solved, recursively.
  if (depth < n) {
    std::vector<int> fixed(n, -1);  // -1 free, else 0/1
    std::size_t num_fixed = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (res.x[j] <= tol) {
        fixed[j] = 0;
        ++num_fixed;
      } else if (res.x[j] >= 1.0 - tol) {
        fixed[j] = 1;
        ++num_fixed;
      }
    }
    if (num_fixed == n) {
      Vec x(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) x[j] = fixed[j];
      if (auto r = try_candidate(p, target, std::move(x), "boundary_fix")) return r;
    } else if (num_fixed > 0) {
      std::vector<std::size_t> free;
      for (std::size_t j = 0; j < n; ++j)
        if (fixed[j] < 0) free.push_back(j);
      const std::size_t k = free.size();

      QsmbProblem red;
      red.Q = SymMatrix(k);
      red.c.assign(k, 0.0);
      red.kappa = p.kappa;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a; b < k; ++b)
          red.Q.set(a, b, p.Q(free[a], free[b]));
      for (std::size_t a = 0; a < k; ++a) {
        double cv = p.c[free[a]];
        for (std::size_t j = 0; j < n; ++j)
          if (fixed[j] == 1) cv += 2.0 * p.Q(free[a], j);
        red.c[a] = cv;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (fixed[i] != 1) continue;
        red.kappa += p.c[i];
        for (std::size_t j = 0; j < n; ++j)
          if (fixed[j] == 1) red.kappa += p.Q(i, j);
      }

      QsmbResult rres = solve_qsmb(red, RelaxKind::TightRlt, SolverSettings{});
      if (rres.status == SolveStatus::Optimal) {
        if (auto sub = recover_impl(red, rres, tol, depth + 1)) {
          Vec x(n, 0.0);
          for (std::size_t j = 0; j < n; ++j) x[j] = std::max(fixed[j], 0);
          for (std::size_t a = 0; a < k; ++a) x[free[a]] = sub->x[a];
          if (auto r = try_candidate(p, target, std::move(x), "boundary_fix"))
            return r;
        }
      }
    }
  }

  // (iv) Projected-gradient polish from the border point.
  {
    Vec x = clip_box(res.x);
    double fx = evaluate_qp(p, x);
    for (int it = 0; it < 400; ++it) {
      Vec g = p.Q.mul(x);
      for (std::size_t j = 0; j < n; ++j) g[j] = 2.0 * g[j] + p.c[j];
      double t = 1.0;
      bool moved = false;
      while (t > 1e-12) {
        Vec xn(n);
        for (std::size_t j = 0; j < n; ++j) xn[j] = x[j] - t * g[j];
        xn = clip_box(std::move(xn));
        const double fn = evaluate_qp(p, xn);
        if (fn < fx - 1e-12 * (1.0 + std::abs(fx))) {
          x = std::move(xn);
          fx = fn;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) break;
    }
    if (auto r = try_candidate(p, target, std::move(x), "polish")) return r;
  }

  return std::nullopt;
}

}  // namespace

std::optional<RecoveredPoint> recover_point(const QsmbProblem& p,
                                            const QsmbResult& res, double tol) {
  p.check_shape();
  if (res.x.size() != p.n()) throw DimensionError("recover_point: result shape");
  return recover_impl(p, res, tol, 0);
}

// ---------------------------------------------------------------------------
// Exact oracle.

OraclePoint oracle_global_min(const QsmbProblem& p) {
  p.check_shape();
  const std::size_t n = p.n();
  if (n > 12) throw DimensionTooLarge("oracle_global_min: n > 12");

  OraclePoint best;
  best.value = std::numeric_limits<double>::infinity();
  best.x.assign(n, 0.0);
  const auto consider = [&](const Vec& x) {
    const double v = evaluate_qp(p, x);
    if (v < best.value) {
      best.value = v;
      best.x = x;
    }
  };

  if (n == 0) {
    best.value = p.kappa;
    return best;
  }

  // All vertices.
  Vec x(n, 0.0);
  for (std::size_t mask = 0; mask < (std::size_t(1) << n); ++mask) {
    for (std::size_t j = 0; j < n; ++j) x[j] = double((mask >> j) & 1);
    consider(x);
  }

  // All 3^n boundary patterns with a nonempty interior set: solve the
  // restricted stationarity system 2 Q_II x_I = -(c_I + 2 Q_{I,F1} e).
  std::size_t total = 1;
  for (std::size_t j = 0; j < n; ++j) total *= 3;
  std::vector<int> digit(n, 0);  // 0: at 0, 1: at 1, 2: interior
  long grid_budget = 20000000;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t t = code;
    for (std::size_t j = 0; j < n; ++j) {
      digit[j] = int(t % 3);
      t /= 3;
    }
    std::vector<std::size_t> interior;
    for (std::size_t j = 0; j < n; ++j)
      if (digit[j] == 2) interior.push_back(j);
    if (interior.empty()) continue;  // vertex, already covered
    const std::size_t k = interior.size();

    SymMatrix A(k);
    Vec rhs(k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a; b < k; ++b)
        A.set(a, b, 2.0 * p.Q(interior[a], interior[b]));
      double r = -p.c[interior[a]];
      for (std::size_t j = 0; j < n; ++j)
        if (digit[j] == 1) r -= 2.0 * p.Q(interior[a], j);
      rhs[a] = r;
    }

    const EigResult ea = eig_sym(A);
    double scale = 0.0;
    for (double l : ea.values) scale = std::max(scale, std::abs(l));
    bool singular = false;
    Vec xi(k, 0.0);  // least-norm (pseudo-inverse) solution
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double lam = ea.values[kk];
      if (std::abs(lam) <= 1e-10 * scale || scale == 0.0) {
        singular = true;
        continue;
      }
      double proj = 0.0;
      for (std::size_t a = 0; a < k; ++a) proj += ea.vector_entry(a, kk) * rhs[a];
      proj /= lam;
      for (std::size_t a = 0; a < k; ++a) xi[a] += proj * ea.vector_entry(a, kk);
    }

    for (std::size_t j = 0; j < n; ++j) x[j] = digit[j] == 1 ? 1.0 : 0.0;
    for (std::size_t a = 0; a < k; ++a)
      x[interior[a]] = std::min(1.0, std::max(0.0, xi[a]));
    consider(x);

    // Singular restricted system with nonzero data: sweep a grid over the
    // interior coordinates (bounded overall so adversarial inputs cannot
    // explode the enumeration; the least-norm candidate stands regardless).
    if (singular && scale > 0.0 && k <= 3) {
      long count = 1;
      for (std::size_t a = 0; a < k; ++a) count *= 101;
      if (grid_budget >= count) {
        grid_budget -= count;
        std::vector<int> g(k, 0);
        for (long step = 0; step < count; ++step) {
          long s = step;
          for (std::size_t a = 0; a < k; ++a) {
            g[a] = int(s % 101);
            s /= 101;
          }
          for (std::size_t a = 0; a < k; ++a) x[interior[a]] = g[a] / 100.0;
          consider(x);
        }
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Box transform and test-instance generator.

QsmbProblem transform_to_unit_box(const QsmbProblem& p, const Vec& l, const Vec& u) {
  p.check_shape();
  const std::size_t n = p.n();
  if (l.size() != n || u.size() != n)
    throw DimensionError("transform_to_unit_box: bound lengths");
  for (std::size_t j = 0; j < n; ++j)
    if (!(l[j] <= u[j])) throw Error("transform_to_unit_box: requires l <= u");

  Vec d(n);
  for (std::size_t j = 0; j < n; ++j) d[j] = u[j] - l[j];

  QsmbProblem out;
  out.Q = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) out.Q.set(i, j, d[i] * d[j] * p.Q(i, j));
  const Vec ql = p.Q.mul(l);
  out.c.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) out.c[j] = d[j] * (p.c[j] + 2.0 * ql[j]);
  out.kappa = p.kappa + dot(l, ql) + dot(p.c, l);
  return out;
}

QsmbProblem random_submodular_problem(std::size_t n, Prng& rng) {
  QsmbProblem p;
  p.Q = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) p.Q.set(i, j, -rng.uniform());
  for (std::size_t i = 0; i < n; ++i) p.Q.set(i, i, rng.uniform(-1.0, 1.0));
  p.c.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) p.c[j] = rng.uniform(-1.0, 1.0);
  p.kappa = 0.0;
  return p;
}

}  // namespace qsmbox
