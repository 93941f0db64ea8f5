#include "qsmbox/moments.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/conic.hpp"
#include "qsmbox/model.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

void MomentSpec::check_shape() const {
  if (mu.empty()) throw DimensionError("MomentSpec: dimension must be positive");
  if (sigma.n() != mu.size())
    throw DimensionError("MomentSpec: sigma order does not match mu length");
}

void ConePoint::check_shape() const {
  if (c1.empty()) throw DimensionError("ConePoint: dimension must be positive");
  if (C2.n() != c1.size())
    throw DimensionError("ConePoint: matrix order does not match vector length");
}

void PiecewiseQuadratic::check_shape() const {
  if (n == 0) throw DimensionError("PiecewiseQuadratic: xi dimension must be positive");
  if (pieces.empty()) throw DimensionError("PiecewiseQuadratic: needs at least one piece");
  for (const QuadPiece& p : pieces) {
    if (p.A0.n() != n || p.b0.size() != n)
      throw DimensionError("PiecewiseQuadratic: piece base coefficients have wrong size");
    if (p.Ax.size() != m || p.bx.size() != m || p.cx.size() != m)
      throw DimensionError("PiecewiseQuadratic: piece decision coefficients have wrong count");
    for (const SymMatrix& a : p.Ax)
      if (a.n() != n) throw DimensionError("PiecewiseQuadratic: Ax coefficient has wrong order");
    for (const Vec& b : p.bx)
      if (b.size() != n) throw DimensionError("PiecewiseQuadratic: bx coefficient has wrong size");
  }
  if (lo.size() != m || hi.size() != m)
    throw DimensionError("PiecewiseQuadratic: box bounds must have length m");
  if (h.size() != G.size() || d.size() != E.size())
    throw DimensionError("PiecewiseQuadratic: inequality/equality sides disagree");
  for (const Vec& g : G)
    if (g.size() != m) throw DimensionError("PiecewiseQuadratic: inequality row has wrong size");
  for (const Vec& e : E)
    if (e.size() != m) throw DimensionError("PiecewiseQuadratic: equality row has wrong size");
  for (const DecisionPsd& c : psd) {
    if (c.F0.n() == 0) throw DimensionError("PiecewiseQuadratic: semidefinite row of order zero");
    if (c.Fx.size() != m)
      throw DimensionError("PiecewiseQuadratic: semidefinite decision coefficients have wrong count");
    for (const SymMatrix& fx : c.Fx)
      if (fx.n() != c.F0.n())
        throw DimensionError("PiecewiseQuadratic: semidefinite coefficient order mismatch");
  }
}

namespace {

// Runs a membership margin program; these are always strictly feasible and
// bounded by construction, so anything but Optimal is a solver breakdown.
// Solved tighter than the membership tolerances (1e-8) so that boundary
// points are decided by the data, not by solver error.
ConicSolution solve_margin(const ConicProgram& prog, const char* what) {
  SolverSettings st;
  st.gap_tol = 1e-9;
  st.feas_tol = 1e-9;
  ConicSolution sol = solve_conic(prog, st);
  if (sol.status != SolveStatus::Optimal)
    throw Error(std::string(what) + ": margin solve ended with status " + to_string(sol.status));
  return sol;
}

SymMatrix piece_a_at(const QuadPiece& p, const Vec& x) {
  SymMatrix a = p.A0;
  for (std::size_t l = 0; l < x.size(); ++l)
    for (std::size_t i = 0; i < a.n(); ++i)
      for (std::size_t j = i; j < a.n(); ++j) a.add(i, j, x[l] * p.Ax[l](i, j));
  return a;
}

Vec piece_b_at(const QuadPiece& p, const Vec& x) {
  Vec b = p.b0;
  for (std::size_t l = 0; l < x.size(); ++l) axpy(x[l], p.bx[l], b);
  return b;
}

double piece_c_at(const QuadPiece& p, const Vec& x) { return p.c0 + dot(p.cx, x); }

// True when every piece's matrix part has nonnegative off-diagonals for
// every decision: the decision-dependent coefficients must not touch the
// off-diagonals at all, and the base off-diagonals must be nonnegative.
bool offdiag_nonneg_structurally(const PiecewiseQuadratic& f) {
  for (const QuadPiece& p : f.pieces) {
    for (std::size_t i = 0; i + 1 < f.n; ++i)
      for (std::size_t j = i + 1; j < f.n; ++j) {
        if (p.A0(i, j) < 0.0) return false;
        for (std::size_t l = 0; l < f.m; ++l)
          if (p.Ax[l](i, j) != 0.0) return false;
      }
  }
  return true;
}

// Box, linear, and semidefinite rows of the decision set; xs is the first
// decision coordinate.
void add_decision_rows(ModelBuilder& mb, const PiecewiseQuadratic& f, std::size_t xs) {
  for (std::size_t l = 0; l < f.m; ++l) {
    std::size_t r = mb.begin_row(f.hi[l], RowSense::Le);
    mb.add_coeff(r, xs + l, 1.0);
    r = mb.begin_row(f.lo[l], RowSense::Ge);
    mb.add_coeff(r, xs + l, 1.0);
  }
  for (std::size_t t = 0; t < f.G.size(); ++t) {
    std::size_t r = mb.begin_row(f.h[t], RowSense::Le);
    for (std::size_t l = 0; l < f.m; ++l)
      if (f.G[t][l] != 0.0) mb.add_coeff(r, xs + l, f.G[t][l]);
  }
  for (std::size_t t = 0; t < f.E.size(); ++t) {
    std::size_t r = mb.begin_row(f.d[t], RowSense::Eq);
    for (std::size_t l = 0; l < f.m; ++l)
      if (f.E[t][l] != 0.0) mb.add_coeff(r, xs + l, f.E[t][l]);
  }
  for (const DecisionPsd& c : f.psd) {
    PsdBlockRef pb = mb.add_psd(c.F0.n());
    for (std::size_t a = 0; a < c.F0.n(); ++a)
      for (std::size_t b = a; b < c.F0.n(); ++b) {
        std::size_t r = mb.begin_row(c.F0(a, b), RowSense::Eq);
        mb.add_psd_entry(r, pb, a, b, 1.0);
        for (std::size_t l = 0; l < f.m; ++l)
          if (c.Fx[l](a, b) != 0.0) mb.add_coeff(r, xs + l, -c.Fx[l](a, b));
      }
  }
}

void require_finite_box(const PiecewiseQuadratic& f, const char* which) {
  for (std::size_t l = 0; l < f.m; ++l) {
    if (!std::isfinite(f.lo[l]) || !std::isfinite(f.hi[l]) || f.lo[l] > f.hi[l])
      throw PreconditionViolated(
          which, "decision box must be finite with lo <= hi at coordinate " + std::to_string(l));
  }
}

}  // namespace

MConeCheck m_cone_member(const ConePoint& pt, double tol) {
  pt.check_shape();
  const std::size_t n = pt.n();
  // Margin program over the completion W: maximize t subject to
  //   W_ij >= Lambda_ij + t (i < j),  W_ij <= lambda_i - t (all i, j),
  //   diag(W) = diag(Lambda),  [[lambda0, lambda'], [lambda, W]] >= t I,
  // carried by one psd slack S = bordered - t I, nonneg slacks for the
  // entrywise rows, and the free margin t.
  ModelBuilder mb;
  PsdBlockRef s = mb.add_psd(n + 1);
  const std::size_t npair = n * (n - 1) / 2;
  const std::size_t zeta0 = npair > 0 ? mb.add_nonneg(npair) : 0;
  const std::size_t eta0 = mb.add_nonneg(n * n);
  const std::size_t tc = mb.add_free(1);
  mb.obj_coeff(tc, -1.0);

  std::size_t r = mb.begin_row(pt.c0);  // S_00 + t = lambda0
  mb.add_psd_entry(r, s, 0, 0, 1.0);
  mb.add_coeff(r, tc, 1.0);
  for (std::size_t j = 0; j < n; ++j) {  // border pinned to lambda
    r = mb.begin_row(pt.c1[j]);
    mb.add_psd_entry(r, s, 0, j + 1, 1.0);
  }
  for (std::size_t j = 0; j < n; ++j) {  // diag(W) = diag(Lambda)
    r = mb.begin_row(pt.C2(j, j));
    mb.add_psd_entry(r, s, j + 1, j + 1, 1.0);
    mb.add_coeff(r, tc, 1.0);
  }
  std::size_t idx = 0;  // W_ij - t - zeta_ij = Lambda_ij
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++idx) {
      r = mb.begin_row(pt.C2(i, j));
      mb.add_psd_entry(r, s, i + 1, j + 1, 1.0);
      mb.add_coeff(r, tc, -1.0);
      mb.add_coeff(r, zeta0 + idx, -1.0);
    }
  for (std::size_t i = 0; i < n; ++i)  // W_ij + t + eta_ij = lambda_i
    for (std::size_t j = 0; j < n; ++j) {
      r = mb.begin_row(pt.c1[i]);
      mb.add_psd_entry(r, s, i + 1, j + 1, 1.0);
      mb.add_coeff(r, eta0 + i * n + j, 1.0);
      mb.add_coeff(r, tc, i == j ? 2.0 : 1.0);  // W_jj carries its own t
    }

  BuiltProgram built = mb.take();
  ConicSolution sol = solve_margin(built.program, "m_cone_member");

  MConeCheck out;
  out.margin = sol.z[tc];
  out.member = out.margin >= -tol;
  if (out.member) {
    SymMatrix sm = extract_psd(sol.z, s);
    SymMatrix w(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        w.set(i, j, sm(i + 1, j + 1) + (i == j ? out.margin : 0.0));
    out.W = w;
  }
  return out;
}

KConeCheck k_cone_member(const ConePoint& pt, double tol) {
  pt.check_shape();
  const std::size_t n = pt.n();
  KConeCheck out;
  if (!is_submodular(pt.C2, tol)) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (pt.C2(i, j) > worst) worst = pt.C2(i, j);
    out.margin = -worst;
    return out;
  }
  // Margin program over the auxiliary matrix: maximize t subject to
  //   Z >= t entrywise,
  //   [[y0, (y' - e'Z)/2], [(y - Z'e)/2, Y + (Z + Z')/2]] >= t I,
  // carried by the psd slack S = bordered - t I and nonneg slacks
  // zeta = Z - t.
  ModelBuilder mb;
  PsdBlockRef s = mb.add_psd(n + 1);
  const std::size_t zeta0 = mb.add_nonneg(n * n);
  const std::size_t tc = mb.add_free(1);
  mb.obj_coeff(tc, -1.0);

  std::size_t r = mb.begin_row(pt.c0);  // S_00 + t = y0
  mb.add_psd_entry(r, s, 0, 0, 1.0);
  mb.add_coeff(r, tc, 1.0);
  for (std::size_t j = 0; j < n; ++j) {  // 2 S_0j + sum_i Z_ij = y_j
    r = mb.begin_row(pt.c1[j]);
    mb.add_psd_entry(r, s, 0, j + 1, 2.0);
    for (std::size_t i = 0; i < n; ++i) mb.add_coeff(r, zeta0 + i * n + j, 1.0);
    mb.add_coeff(r, tc, static_cast<double>(n));
  }
  for (std::size_t j = 0; j < n; ++j) {  // S_jj - zeta_jj = Y_jj
    r = mb.begin_row(pt.C2(j, j));
    mb.add_psd_entry(r, s, j + 1, j + 1, 1.0);
    mb.add_coeff(r, zeta0 + j * n + j, -1.0);
  }
  for (std::size_t i = 0; i < n; ++i)  // S_ij - (zeta_ij + zeta_ji)/2 - t = Y_ij
    for (std::size_t j = i + 1; j < n; ++j) {
      r = mb.begin_row(pt.C2(i, j));
      mb.add_psd_entry(r, s, i + 1, j + 1, 1.0);
      mb.add_coeff(r, zeta0 + i * n + j, -0.5);
      mb.add_coeff(r, zeta0 + j * n + i, -0.5);
      mb.add_coeff(r, tc, -1.0);
    }

  BuiltProgram built = mb.take();
  ConicSolution sol = solve_margin(built.program, "k_cone_member");

  out.margin = sol.z[tc];
  out.member = out.margin >= -tol;
  if (out.member) {
    Vec zmat(n * n);
    for (std::size_t e = 0; e < n * n; ++e) zmat[e] = sol.z[zeta0 + e] + out.margin;
    out.Z = zmat;
  }
  return out;
}

MConeCheck p_nonempty(const MomentSpec& spec) {
  spec.check_shape();
  ConePoint pt;
  pt.c0 = 1.0;
  pt.c1 = spec.mu;
  pt.C2 = spec.sigma;
  return m_cone_member(pt, 1e-8);
}

bool q_nonempty(const MomentSpec& spec) {
  spec.check_shape();
  for (double mi : spec.mu)
    if (!(mi >= 0.0 && mi <= 1.0)) return false;
  SymMatrix b = bordered(1.0, spec.mu, spec.sigma);
  return min_eigenvalue(b) >= -1e-9 * (1.0 + b.max_abs());
}

namespace {

// Reconstructs the per-piece domination certificate from the returned duals
// and the decision (never from the solver's slack blocks) and eigen-checks
// it, so row residuals and cone violations are caught together.
void verify_p_duals(const PiecewiseQuadratic& f, const DroResult& res) {
  const std::size_t n = f.n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (res.Y(i, j) > 1e-8)
        throw Error("solve_dro_p: returned Y is not submodular within 1e-8");
  for (std::size_t k = 0; k < f.pieces.size(); ++k) {
    for (double v : res.Z[k])
      if (v < -1e-8) throw Error("solve_dro_p: returned Z has entries below -1e-8");
    const QuadPiece& p = f.pieces[k];
    SymMatrix a = piece_a_at(p, res.x);
    Vec b = piece_b_at(p, res.x);
    SymMatrix dom(n + 1);
    dom.set(0, 0, res.y0 - piece_c_at(p, res.x));
    for (std::size_t j = 0; j < n; ++j) {
      double colsum = 0.0;
      for (std::size_t i = 0; i < n; ++i) colsum += res.Z[k][i * n + j];
      dom.set(0, j + 1, 0.5 * (res.y[j] - colsum - b[j]));
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        dom.set(i + 1, j + 1,
                res.Y(i, j) + 0.5 * (res.Z[k][i * n + j] + res.Z[k][j * n + i]) - a(i, j));
    if (min_eigenvalue(dom) < -1e-7 * (1.0 + dom.max_abs()))
      throw Error("solve_dro_p: piece domination certificate not psd within 1e-7");
  }
}

void verify_q_duals(const PiecewiseQuadratic& f, const DroResult& res) {
  const std::size_t n = f.n;
  if (min_eigenvalue(res.Y) < -1e-7 * (1.0 + res.Y.max_abs()))
    throw Error("solve_dro_q: returned Y not psd within 1e-7");
  for (std::size_t k = 0; k < f.pieces.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i)
      if (res.z[k][i] < -1e-8 || res.w[k][i] < -1e-8)
        throw Error("solve_dro_q: returned multipliers below -1e-8");
    const QuadPiece& p = f.pieces[k];
    SymMatrix a = piece_a_at(p, res.x);
    Vec b = piece_b_at(p, res.x);
    double zsum = 0.0;
    for (double v : res.z[k]) zsum += v;
    SymMatrix dom(n + 1);
    dom.set(0, 0, res.y0 - zsum - piece_c_at(p, res.x));
    for (std::size_t j = 0; j < n; ++j)
      dom.set(0, j + 1, 0.5 * (res.y[j] + res.z[k][j] - res.w[k][j] - b[j]));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) dom.set(i + 1, j + 1, res.Y(i, j) - a(i, j));
    if (min_eigenvalue(dom) < -1e-7 * (1.0 + dom.max_abs()))
      throw Error("solve_dro_q: piece domination certificate not psd within 1e-7");
  }
}

}  // namespace

DroResult solve_dro_p(const MomentSpec& spec, const PiecewiseQuadratic& f,
                      const SolverSettings& settings) {
  spec.check_shape();
  f.check_shape();
  if (f.n != spec.n())
    throw DimensionError("solve_dro_p: cost dimension does not match moment spec");
  const std::size_t n = spec.n();
  const std::size_t kk = f.pieces.size();

  require_finite_box(f, "a");
  MConeCheck feas = p_nonempty(spec);
  if (!feas.member)
    throw PreconditionViolated(
        "c", "ambiguity set is empty (moment system margin " + std::to_string(feas.margin) + ")");
  const bool structural = offdiag_nonneg_structurally(f);

  // min y0 + mu'y + sigma.Y over the dominating quadratics: per piece the
  // psd slack S_k carries
  //   [[y0, (y' - e'Z_k)/2], [(y - Z_k'e)/2, Y + (Z_k + Z_k')/2]]
  //     - [[c_k(x), b_k(x)'/2], [b_k(x)/2, A_k(x)]] >= 0,
  // with Y's off-diagonals held nonpositive through negated nonneg
  // coordinates u and its diagonal free.
  ModelBuilder mb;
  const std::size_t xs = f.m > 0 ? mb.add_free(f.m) : 0;
  const std::size_t y0c = mb.add_free(1);
  const std::size_t yc = mb.add_free(n);
  const std::size_t ydc = mb.add_free(n);
  const std::size_t npair = n * (n - 1) / 2;
  const std::size_t uc = npair > 0 ? mb.add_nonneg(npair) : 0;
  std::vector<std::size_t> zc(kk);
  std::vector<PsdBlockRef> sref(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    zc[k] = mb.add_nonneg(n * n);
    sref[k] = mb.add_psd(n + 1);
  }

  mb.obj_coeff(y0c, 1.0);
  for (std::size_t j = 0; j < n; ++j) mb.obj_coeff(yc + j, spec.mu[j]);
  for (std::size_t i = 0; i < n; ++i) mb.obj_coeff(ydc + i, spec.sigma(i, i));
  {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j, ++idx)
        mb.obj_coeff(uc + idx, -2.0 * spec.sigma(i, j));
  }

  for (std::size_t k = 0; k < kk; ++k) {
    const QuadPiece& p = f.pieces[k];
    std::size_t r = mb.begin_row(-p.c0);  // corner
    mb.add_psd_entry(r, sref[k], 0, 0, 1.0);
    mb.add_coeff(r, y0c, -1.0);
    for (std::size_t l = 0; l < f.m; ++l)
      if (p.cx[l] != 0.0) mb.add_coeff(r, xs + l, p.cx[l]);
    for (std::size_t j = 0; j < n; ++j) {  // border
      r = mb.begin_row(-p.b0[j]);
      mb.add_psd_entry(r, sref[k], 0, j + 1, 2.0);
      mb.add_coeff(r, yc + j, -1.0);
      for (std::size_t i = 0; i < n; ++i) mb.add_coeff(r, zc[k] + i * n + j, 1.0);
      for (std::size_t l = 0; l < f.m; ++l)
        if (p.bx[l][j] != 0.0) mb.add_coeff(r, xs + l, p.bx[l][j]);
    }
    for (std::size_t i = 0; i < n; ++i) {  // body diagonal
      r = mb.begin_row(-p.A0(i, i));
      mb.add_psd_entry(r, sref[k], i + 1, i + 1, 1.0);
      mb.add_coeff(r, ydc + i, -1.0);
      mb.add_coeff(r, zc[k] + i * n + i, -1.0);
      for (std::size_t l = 0; l < f.m; ++l)
        if (p.Ax[l](i, i) != 0.0) mb.add_coeff(r, xs + l, p.Ax[l](i, i));
    }
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i)  // body off-diagonal
      for (std::size_t j = i + 1; j < n; ++j, ++idx) {
        r = mb.begin_row(-p.A0(i, j));
        mb.add_psd_entry(r, sref[k], i + 1, j + 1, 1.0);
        mb.add_coeff(r, uc + idx, 1.0);
        mb.add_coeff(r, zc[k] + i * n + j, -0.5);
        mb.add_coeff(r, zc[k] + j * n + i, -0.5);
        for (std::size_t l = 0; l < f.m; ++l)
          if (p.Ax[l](i, j) != 0.0) mb.add_coeff(r, xs + l, p.Ax[l](i, j));
      }
  }
  add_decision_rows(mb, f, xs);

  BuiltProgram built = mb.take();
  ConicSolution sol = solve_conic(built.program, settings);

  DroResult out;
  out.status = sol.status;
  out.moment_margin = feas.margin;
  if (sol.status != SolveStatus::Optimal) {
    out.value = std::numeric_limits<double>::quiet_NaN();
    out.conic = std::move(sol);
    return out;
  }
  out.value = sol.pobj;
  out.x.assign(sol.z.begin() + static_cast<std::ptrdiff_t>(xs),
               sol.z.begin() + static_cast<std::ptrdiff_t>(xs + f.m));
  out.y0 = sol.z[y0c];
  out.y.assign(sol.z.begin() + static_cast<std::ptrdiff_t>(yc),
               sol.z.begin() + static_cast<std::ptrdiff_t>(yc + n));
  out.Y = SymMatrix(n);
  for (std::size_t i = 0; i < n; ++i) out.Y.set(i, i, sol.z[ydc + i]);
  {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j, ++idx) out.Y.set(i, j, -sol.z[uc + idx]);
  }
  out.Z.resize(kk);
  for (std::size_t k = 0; k < kk; ++k)
    out.Z[k].assign(sol.z.begin() + static_cast<std::ptrdiff_t>(zc[k]),
                    sol.z.begin() + static_cast<std::ptrdiff_t>(zc[k] + n * n));
  out.conic = std::move(sol);

  if (!structural) {
    for (std::size_t k = 0; k < kk; ++k) {
      SymMatrix a = piece_a_at(f.pieces[k], out.x);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          if (a(i, j) < -1e-9 * (1.0 + a.max_abs()))
            throw PreconditionViolated(
                "b", "piece " + std::to_string(k) +
                         " has a negative off-diagonal at the returned decision");
    }
  }
  verify_p_duals(f, out);
  return out;
}

DroResult solve_dro_q(const MomentSpec& spec, const PiecewiseQuadratic& f,
                      const SolverSettings& settings) {
  spec.check_shape();
  f.check_shape();
  if (f.n != spec.n())
    throw DimensionError("solve_dro_q: cost dimension does not match moment spec");
  const std::size_t n = spec.n();
  const std::size_t kk = f.pieces.size();

  require_finite_box(f, "box");
  if (!q_nonempty(spec))
    throw PreconditionViolated("nonempty", "mean/second-moment pair admits no distribution");

  // min y0 + mu'y + sigma.Y with Y psd: per piece the psd slack S_k carries
  //   [[y0 - e'z_k, (y + z_k - w_k)'/2], [(y + z_k - w_k)/2, Y]]
  //     - [[c_k(x), b_k(x)'/2], [b_k(x)/2, A_k(x)]] >= 0.
  ModelBuilder mb;
  const std::size_t xs = f.m > 0 ? mb.add_free(f.m) : 0;
  const std::size_t y0c = mb.add_free(1);
  const std::size_t yc = mb.add_free(n);
  PsdBlockRef yb = mb.add_psd(n);
  std::vector<std::size_t> zkc(kk), wkc(kk);
  std::vector<PsdBlockRef> sref(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    zkc[k] = mb.add_nonneg(n);
    wkc[k] = mb.add_nonneg(n);
    sref[k] = mb.add_psd(n + 1);
  }

  mb.obj_coeff(y0c, 1.0);
  for (std::size_t j = 0; j < n; ++j) mb.obj_coeff(yc + j, spec.mu[j]);
  mb.obj_psd_matrix(yb, spec.sigma);

  for (std::size_t k = 0; k < kk; ++k) {
    const QuadPiece& p = f.pieces[k];
    std::size_t r = mb.begin_row(-p.c0);  // corner
    mb.add_psd_entry(r, sref[k], 0, 0, 1.0);
    mb.add_coeff(r, y0c, -1.0);
    for (std::size_t i = 0; i < n; ++i) mb.add_coeff(r, zkc[k] + i, 1.0);
    for (std::size_t l = 0; l < f.m; ++l)
      if (p.cx[l] != 0.0) mb.add_coeff(r, xs + l, p.cx[l]);
    for (std::size_t j = 0; j < n; ++j) {  // border
      r = mb.begin_row(-p.b0[j]);
      mb.add_psd_entry(r, sref[k], 0, j + 1, 2.0);
      mb.add_coeff(r, yc + j, -1.0);
      mb.add_coeff(r, zkc[k] + j, -1.0);
      mb.add_coeff(r, wkc[k] + j, 1.0);
      for (std::size_t l = 0; l < f.m; ++l)
        if (p.bx[l][j] != 0.0) mb.add_coeff(r, xs + l, p.bx[l][j]);
    }
    for (std::size_t i = 0; i < n; ++i)  // body
      for (std::size_t j = i; j < n; ++j) {
        r = mb.begin_row(-p.A0(i, j));
        mb.add_psd_entry(r, sref[k], i + 1, j + 1, 1.0);
        mb.add_psd_entry(r, yb, i, j, -1.0);
        for (std::size_t l = 0; l < f.m; ++l)
          if (p.Ax[l](i, j) != 0.0) mb.add_coeff(r, xs + l, p.Ax[l](i, j));
      }
  }
  add_decision_rows(mb, f, xs);

  BuiltProgram built = mb.take();
  ConicSolution sol = solve_conic(built.program, settings);

  DroResult out;
  out.status = sol.status;
  if (sol.status != SolveStatus::Optimal) {
    out.value = std::numeric_limits<double>::quiet_NaN();
    out.conic = std::move(sol);
    return out;
  }
  out.value = sol.pobj;
  out.x.assign(sol.z.begin() + static_cast<std::ptrdiff_t>(xs),
               sol.z.begin() + static_cast<std::ptrdiff_t>(xs + f.m));
  out.y0 = sol.z[y0c];
  out.y.assign(sol.z.begin() + static_cast<std::ptrdiff_t>(yc),
               sol.z.begin() + static_cast<std::ptrdiff_t>(yc + n));
  out.Y = extract_psd(sol.z, yb);
  out.z.resize(kk);
  out.w.resize(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    out.z[k].assign(sol.z.begin() + static_cast<std::ptrdiff_t>(zkc[k]),
                    sol.z.begin() + static_cast<std::ptrdiff_t>(zkc[k] + n));
    out.w[k].assign(sol.z.begin() + static_cast<std::ptrdiff_t>(wkc[k]),
                    sol.z.begin() + static_cast<std::ptrdiff_t>(wkc[k] + n));
  }
  out.conic = std::move(sol);

  for (std::size_t k = 0; k < kk; ++k) {
    SymMatrix a = piece_a_at(f.pieces[k], out.x);
    EigResult eig = eig_sym(a);
    if (eig.values.back() > 1e-9 * (1.0 + a.max_abs()))
      throw PreconditionViolated(
          "nsd", "piece " + std::to_string(k) +
                     " is not negative semidefinite at the returned decision");
  }
  verify_q_duals(f, out);
  return out;
}

}  // namespace qsmbox
