#include "qsmbox/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <utility>

#include "qsmbox/dense.hpp"

namespace qsmbox {

// ---------------------------------------------------------------------------
// Program plumbing

std::size_t ConicProgram::num_coords() const {
  std::size_t n = 0;
  for (const ConeBlock& b : blocks) n += b.coords();
  return n;
}

void ConicProgram::check_well_formed() const {
  const std::size_t n = num_coords();
  if (objective.size() != n)
    throw DimensionError("ConicProgram: objective length != coordinate count");
  for (double v : objective)
    if (!std::isfinite(v)) throw Error("ConicProgram: nonfinite objective");
  for (const SparseRow& r : rows) {
    if (r.idx.size() != r.val.size())
      throw DimensionError("ConicProgram: row index/value length mismatch");
    if (!std::isfinite(r.rhs)) throw Error("ConicProgram: nonfinite rhs");
    for (std::size_t k = 0; k < r.idx.size(); ++k) {
      if (r.idx[k] >= n) throw DimensionError("ConicProgram: row index out of range");
      if (!std::isfinite(r.val[k])) throw Error("ConicProgram: nonfinite coefficient");
    }
  }
}

void SolverSettings::check_valid() const {
  if (!(gap_tol > 0) || !(feas_tol > 0))
    throw Error("SolverSettings: tolerances must be positive");
  if (max_iterations < 1) throw Error("SolverSettings: max_iterations must be >= 1");
  if (!(boundary_factor > 0) || !(boundary_factor < 1))
    throw Error("SolverSettings: boundary factor must lie in (0,1)");
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::PrimalInfeasible: return "PrimalInfeasible";
    case SolveStatus::DualInfeasible: return "DualInfeasible";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Dump format. Plain text, whitespace separated:
//   conicdump 1
//   blocks <count>
//   <psd|nonneg|free> <dim>          (one line per block, in coordinate order)
//   objective <nnz>
//   <coord> <value>                  (nnz lines)
//   rows <count>
//   row <rhs> <nnz>
//   <coord> <value>                  (nnz lines; then the next "row" line)
//   end
// Coordinates are zero-based over the concatenated blocks; PSD blocks use the
// scaled (sqrt-2 off-diagonal) column-major lower-triangle packing.

void dump_program(const ConicProgram& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("dump_program: cannot open " + path);
  out.precision(17);
  out << "conicdump 1\n";
  out << "blocks " << p.blocks.size() << "\n";
  for (const ConeBlock& b : p.blocks) {
    switch (b.kind) {
      case BlockKind::Psd: out << "psd "; break;
      case BlockKind::NonNeg: out << "nonneg "; break;
      case BlockKind::Free: out << "free "; break;
    }
    out << b.dim << "\n";
  }
  std::size_t onnz = 0;
  for (double v : p.objective)
    if (v != 0.0) ++onnz;
  out << "objective " << onnz << "\n";
  for (std::size_t c = 0; c < p.objective.size(); ++c)
    if (p.objective[c] != 0.0) out << c << " " << p.objective[c] << "\n";
  out << "rows " << p.rows.size() << "\n";
  for (const SparseRow& r : p.rows) {
    out << "row " << r.rhs << " " << r.idx.size() << "\n";
    for (std::size_t k = 0; k < r.idx.size(); ++k)
      out << r.idx[k] << " " << r.val[k] << "\n";
  }
  out << "end\n";
  if (!out) throw IoError("dump_program: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Presolve: drop zero rows (flagging inconsistent ones), drop exact duplicate
// rows, and scale the rest to unit infinity-norm. Columns are untouched, so
// primal points transfer verbatim; row multipliers map back through the
// recorded scale factors.

namespace {

struct Presolved {
  bool trivially_infeasible = false;
  ConicProgram prog;
  std::vector<std::size_t> orig_row;  // kept row -> original row index
  Vec scale;                          // y_orig = y_scaled * scale
};

Presolved presolve(const ConicProgram& p0) {
  Presolved out;
  out.prog.blocks = p0.blocks;
  out.prog.objective = p0.objective;

  // Key: canonicalized (sorted, scaled) row content, compared exactly.
  std::map<std::vector<std::pair<std::size_t, double>>, std::size_t> seen;

  for (std::size_t r = 0; r < p0.rows.size(); ++r) {
    SparseRow row = p0.rows[r];

    // Sort entries by coordinate and merge repeats.
    std::vector<std::pair<std::size_t, double>> ent(row.idx.size());
    for (std::size_t k = 0; k < row.idx.size(); ++k)
      ent[k] = {row.idx[k], row.val[k]};
    std::sort(ent.begin(), ent.end());
    std::vector<std::pair<std::size_t, double>> merged;
    for (const auto& e : ent) {
      if (!merged.empty() && merged.back().first == e.first)
        merged.back().second += e.second;
      else
        merged.push_back(e);
    }
    double ninf = 0.0;
    for (const auto& e : merged) ninf = std::max(ninf, std::abs(e.second));

    if (ninf <= 1e-14) {
      // Zero row: inconsistent iff the rhs is materially nonzero.
      if (std::abs(row.rhs) > 1e-12) {
        out.trivially_infeasible = true;
        return out;
      }
      continue;
    }

    const double t = 1.0 / ninf;
    for (auto& e : merged) e.second *= t;
    const double rhs = row.rhs * t;

    auto key = merged;
    key.emplace_back(std::size_t(-1), rhs);  // fold rhs into the key
    auto it = seen.find(key);
    if (it != seen.end()) continue;  // exact duplicate (same rhs): drop

    // Same lhs with a different rhs is an inconsistency: check against any
    // previously kept row with an identical coefficient pattern.
    auto lhs_only = merged;
    lhs_only.emplace_back(std::size_t(-1), 0.0);
    for (auto& [k2, kept] : seen) {
      if (k2.size() != key.size()) continue;
      bool same_lhs = true;
      for (std::size_t q = 0; q + 1 < k2.size(); ++q)
        if (k2[q] != key[q]) {
          same_lhs = false;
          break;
        }
      if (same_lhs && std::abs(k2.back().second - rhs) > 1e-12 * (1.0 + std::abs(rhs))) {
        out.trivially_infeasible = true;
        return out;
      }
    }

    seen.emplace(std::move(key), out.prog.rows.size());
    SparseRow kept;
    kept.rhs = rhs;
    kept.idx.reserve(merged.size());
    kept.val.reserve(merged.size());
    for (const auto& e : merged) {
      kept.idx.push_back(e.first);
      kept.val.push_back(e.second);
    }
    out.prog.rows.push_back(std::move(kept));
    out.orig_row.push_back(r);
    out.scale.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small dense symmetric helpers (row-major d*d buffers). Orders stay <= ~60,
// so plain triple loops are fine.

Vec matmul(std::size_t d, const Vec& a, const Vec& b) {
  Vec c(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * d;
      double* crow = c.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) crow[j] += aik * brow[j];
    }
  return c;
}

SymMatrix to_sym(std::size_t d, const Vec& dense) {
  SymMatrix m(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j)
      m.set(i, j, 0.5 * (dense[i * d + j] + dense[j * d + i]));
  return m;
}

// U f(lambda) U' from an eigendecomposition.
template <typename F>
Vec eig_apply(const EigResult& e, F f) {
  const std::size_t d = e.n;
  Vec out(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double fk = f(e.values[k]);
    if (fk == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i) {
      const double uik = e.vector_entry(i, k) * fk;
      if (uik == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j)
        out[i * d + j] += uik * e.vector_entry(j, k);
    }
  }
  return out;
}

// Scaled packed slice -> dense symmetric matrix, and back.
void unpack_slice(const Vec& v, std::size_t coord0, std::size_t d, Vec& dense) {
  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  dense.assign(d * d, 0.0);
  std::size_t k = 0;
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = j; i < d; ++i, ++k) {
      const double raw = v[coord0 + k];
      const double val = (i == j) ? raw : raw * inv_rt2;
      dense[i * d + j] = val;
      dense[j * d + i] = val;
    }
}

void pack_slice(const Vec& dense, std::size_t d, Vec& v, std::size_t coord0) {
  const double rt2 = std::sqrt(2.0);
  std::size_t k = 0;
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = j; i < d; ++i, ++k) {
      if (i == j)
        v[coord0 + k] = dense[j * d + j];
      else
        v[coord0 + k] = 0.5 * (dense[i * d + j] + dense[j * d + i]) * rt2;
    }
}

// ---------------------------------------------------------------------------
// Compiled program: coordinate classification and the per-block structures
// the Schur assembly iterates over.

struct Compiled {
  std::size_t N = 0;  // coordinates
  std::size_t m = 0;  // rows
  std::size_t f = 0;  // free coordinates
  std::size_t nu = 0; // barrier degree: sum of PSD orders + nonneg count

  struct PsdB {
    std::size_t d, coord0;
  };
  std::vector<PsdB> psd;
  std::vector<std::size_t> nn_coord;    // nn slot -> coordinate
  std::vector<std::size_t> free_coord;  // free slot -> coordinate

  enum : unsigned char { kPsd = 0, kNn = 1, kFree = 2 };
  std::vector<unsigned char> kind;  // per coordinate
  std::vector<std::size_t> aux;     // psd: block slot / nn: nn slot / free: free slot

  // Schur structures. A row's coefficients on PSD block b, in symmetric
  // matrix-entry terms: entry (i, j) with half-weight folded in for the
  // diagonal (gs = g for i != j, g/2 for i == j).
  struct Part {
    int i, j;
    double gs;
  };
  struct Span {
    int row;
    int begin, end;  // range in parts
  };
  std::vector<std::vector<Part>> parts;  // per psd block
  std::vector<std::vector<Span>> spans;  // per psd block, ascending rows
  std::vector<std::vector<std::pair<int, double>>> nn_cols;  // per nn slot

  Vec b, c;
  Vec AF;  // m x f, row-major
  const std::vector<SparseRow>* rows = nullptr;
};

Compiled compile(const ConicProgram& p) {
  Compiled c;
  c.N = p.num_coords();
  c.m = p.rows.size();
  c.rows = &p.rows;
  c.kind.assign(c.N, Compiled::kFree);
  c.aux.assign(c.N, 0);

  std::size_t off = 0;
  for (const ConeBlock& b : p.blocks) {
    if (b.kind == BlockKind::Psd) {
      const std::size_t slot = c.psd.size();
      c.psd.push_back({b.dim, off});
      for (std::size_t k = 0; k < b.coords(); ++k) {
        c.kind[off + k] = Compiled::kPsd;
        c.aux[off + k] = slot;
      }
      c.nu += b.dim;
    } else if (b.kind == BlockKind::NonNeg) {
      for (std::size_t k = 0; k < b.dim; ++k) {
        c.kind[off + k] = Compiled::kNn;
        c.aux[off + k] = c.nn_coord.size();
        c.nn_coord.push_back(off + k);
      }
      c.nu += b.dim;
    } else {
      for (std::size_t k = 0; k < b.dim; ++k) {
        c.kind[off + k] = Compiled::kFree;
        c.aux[off + k] = c.free_coord.size();
        c.free_coord.push_back(off + k);
      }
    }
    off += b.coords();
  }
  c.f = c.free_coord.size();

  // Packed index -> (i, j) tables per PSD block.
  std::vector<std::vector<std::pair<int, int>>> packed_ij(c.psd.size());
  for (std::size_t s = 0; s < c.psd.size(); ++s) {
    packed_ij[s].reserve(packed_size(c.psd[s].d));
    for (std::size_t j = 0; j < c.psd[s].d; ++j)
      for (std::size_t i = j; i < c.psd[s].d; ++i)
        packed_ij[s].emplace_back(int(i), int(j));
  }

  c.parts.resize(c.psd.size());
  c.spans.resize(c.psd.size());
  c.nn_cols.resize(c.nn_coord.size());
  c.AF.assign(c.m * c.f, 0.0);

  const double inv_rt2 = 1.0 / std::sqrt(2.0);
  for (std::size_t r = 0; r < c.m; ++r) {
    const SparseRow& row = p.rows[r];
    std::vector<int> touched;  // psd blocks touched by this row
    for (std::size_t k = 0; k < row.idx.size(); ++k) {
      const std::size_t coord = row.idx[k];
      const double a = row.val[k];
      switch (c.kind[coord]) {
        case Compiled::kPsd: {
          const std::size_t s = c.aux[coord];
          const auto [i, j] = packed_ij[s][coord - c.psd[s].coord0];
          // Packed coefficient a on a scaled coordinate corresponds to the
          // symmetric-entry coefficient g = a (diagonal) or a/sqrt(2)
          // (off-diagonal, where the coordinate stores sqrt(2)*X_ij).
          const double g = (i == j) ? a : a * inv_rt2;
          const double gs = (i == j) ? 0.5 * g : g;
          if (c.spans[s].empty() || c.spans[s].back().row != int(r)) {
            c.spans[s].push_back({int(r), int(c.parts[s].size()), 0});
            touched.push_back(int(s));
          }
          c.parts[s].push_back({i, j, gs});
          break;
        }
        case Compiled::kNn:
          c.nn_cols[c.aux[coord]].emplace_back(int(r), a);
          break;
        case Compiled::kFree:
          c.AF[r * c.f + c.aux[coord]] += a;
          break;
      }
    }
    for (int s : touched) c.spans[s].back().end = int(c.parts[s].size());
  }
  for (auto& col : c.nn_cols)
    std::sort(col.begin(), col.end());

  c.b.assign(c.m, 0.0);
  for (std::size_t r = 0; r < c.m; ++r) c.b[r] = p.rows[r].rhs;
  c.c = p.objective;
  return c;
}

// ---------------------------------------------------------------------------
// The interior-point method.

constexpr double kInf = std::numeric_limits<double>::infinity();

class Ipm {
 public:
  Ipm(const Compiled& c, const SolverSettings& st) : C(c), st_(st) {}

  // Runs the iteration; fills status/iterates. Vectors are in the presolved
  // program's coordinates/rows.
  void run();

  SolveStatus status = SolveStatus::NumericalFailure;
  Vec z, y, s;
  int iterations = 0;
  std::vector<IterateRecord> trace;

 private:
  const Compiled& C;
  const SolverSettings& st_;

  // Per-iteration scaling state.
  std::vector<Vec> Zd_, Sd_, W_, Wh_, Wih_;
  std::vector<EigResult> eigZ_, eigS_;
  Vec h_;  // nn scaling z_i / s_i per nn slot

  Vec M_, L_;  // Schur complement and its factor (m*m)
  Vec U_;      // L^{-1} A_F, m*f row-major
  Vec SFL_;    // factor of A_F' M^{-1} A_F (f*f)

  // Extended-precision fallback. Degenerate optimal faces push the scaled
  // system's conditioning past what double-precision factors can refine
  // (curvature spans ~1/mu^2 near convergence); once the endgame detects
  // corrections that stop contracting, the Schur system is assembled,
  // factored, and solved in long double for the rest of the run.
  bool use_ld_ = false;
  mutable double refine_ratio_ = 0.0;  // last newton_solve residual / rhs
  std::vector<long double> Mld_, Lld_, Uld_, SFLld_;

  double bnorm_ = 0, cnorm_ = 0, eta_ = 1;

  // --- basic products -------------------------------------------------
  Vec az(const Vec& v) const {
    Vec out(C.m, 0.0);
    for (std::size_t r = 0; r < C.m; ++r) {
      const SparseRow& row = (*C.rows)[r];
      double acc = 0.0;
      for (std::size_t k = 0; k < row.idx.size(); ++k)
        acc += row.val[k] * v[row.idx[k]];
      out[r] = acc;
    }
    return out;
  }

  Vec aty(const Vec& yy) const {
    Vec out(C.N, 0.0);
    for (std::size_t r = 0; r < C.m; ++r) {
      const double yr = yy[r];
      if (yr == 0.0) continue;
      const SparseRow& row = (*C.rows)[r];
      for (std::size_t k = 0; k < row.idx.size(); ++k)
        out[row.idx[k]] += row.val[k] * yr;
    }
    return out;
  }

  // H v on cone coordinates (free coordinates zeroed): per PSD block
  // W X W, per nonneg coordinate h_i v_i.
  Vec apply_h(const Vec& v) const {
    Vec out(C.N, 0.0);
    Vec x, wx, wxw;
    for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
      const auto& pb = C.psd[sblk];
      unpack_slice(v, pb.coord0, pb.d, x);
      wx = matmul(pb.d, W_[sblk], x);
      wxw = matmul(pb.d, wx, W_[sblk]);
      pack_slice(wxw, pb.d, out, pb.coord0);
    }
    for (std::size_t k = 0; k < C.nn_coord.size(); ++k)
      out[C.nn_coord[k]] = h_[k] * v[C.nn_coord[k]];
    return out;
  }

  // Exact Schur operator A_C H A_C' (no regularization), for refinement.
  Vec mop(const Vec& dy) const { return az(apply_h(aty(dy))); }

  // Saddle residual at (dy, dzF), accumulated in extended precision.
  void refine_residual(const Vec& r1, const Vec& r2, const Vec& dy,
                       const Vec& dzF, Vec& res1, Vec& res2) const;

  // --- scaling & factorization ----------------------------------------
  bool compute_scaling();
  bool assemble_and_factor();
  template <typename T>
  void assemble_schur(std::vector<T>& M) const;
  bool factor_extended();

  // --- saddle solves ---------------------------------------------------
  struct Direction {
    Vec dz, dy, ds;
  };
  bool newton_solve(const Vec& rc, const Vec& rp, const Vec& rd, Direction& out) const;
  void saddle_solve(const Vec& r1, const Vec& r2, Vec& dy, Vec& dzF) const;
  void saddle_solve_ld(const Vec& r1, const Vec& r2, Vec& dy, Vec& dzF) const;

  // --- steps ------------------------------------------------------------
  double max_step_cone(const Vec& v, const Vec& dv,
                       const std::vector<EigResult>& eigs) const;

  void certificate_checks(bool loose, SolveStatus* verdict) const;

  // Breakdown exit: attempt to salvage an infeasibility classification from
  // the current iterate before reporting a numerical failure.
  SolveStatus classify_breakdown() const {
    SolveStatus verdict = SolveStatus::NumericalFailure;
    certificate_checks(/*loose=*/true, &verdict);
    return verdict;
  }

  // Iterate with the smallest tolerance-scaled max residual seen so far.
  // Late iterations can lose accuracy (the scaling grows as ill-conditioned
  // as 1/mu), so failure exits hand back this point instead of the last one.
  Vec zbest_, ybest_, sbest_;
  double best_merit_ = kInf;

  // Classify like classify_breakdown, but when the verdict is a plain
  // numerical failure (no certificate to preserve), rewind to the best
  // iterate so callers see the most accurate point the run produced.
  SolveStatus classify_breakdown_keep_best() {
    SolveStatus verdict = classify_breakdown();
    if (verdict == SolveStatus::NumericalFailure) restore_best();
    return verdict;
  }

  void restore_best() {
    if (zbest_.empty()) return;
    z = zbest_;
    y = ybest_;
    s = sbest_;
  }
};

bool Ipm::compute_scaling() {
  const std::size_t nb = C.psd.size();
  Zd_.resize(nb);
  Sd_.resize(nb);
  W_.resize(nb);
  Wh_.resize(nb);
  Wih_.resize(nb);
  eigZ_.resize(nb);
  eigS_.resize(nb);

  for (std::size_t sblk = 0; sblk < nb; ++sblk) {
    const auto& pb = C.psd[sblk];
    unpack_slice(z, pb.coord0, pb.d, Zd_[sblk]);
    unpack_slice(s, pb.coord0, pb.d, Sd_[sblk]);
    eigZ_[sblk] = eig_sym(to_sym(pb.d, Zd_[sblk]));
    eigS_[sblk] = eig_sym(to_sym(pb.d, Sd_[sblk]));
    if (eigZ_[sblk].values.front() <= 0.0 || eigS_[sblk].values.front() <= 0.0)
      return false;  // iterate left the interior

    // W = Z^{1/2} (Z^{1/2} S Z^{1/2})^{-1/2} Z^{1/2}.
    Vec zh = eig_apply(eigZ_[sblk], [](double l) { return std::sqrt(l); });
    Vec t = matmul(pb.d, matmul(pb.d, zh, Sd_[sblk]), zh);
    EigResult et = eig_sym(to_sym(pb.d, t));
    if (et.values.front() <= 0.0) return false;
    Vec tih = eig_apply(et, [](double l) { return 1.0 / std::sqrt(l); });
    W_[sblk] = matmul(pb.d, matmul(pb.d, zh, tih), zh);

    EigResult ew = eig_sym(to_sym(pb.d, W_[sblk]));
    if (ew.values.front() <= 0.0) return false;
    Wh_[sblk] = eig_apply(ew, [](double l) { return std::sqrt(l); });
    Wih_[sblk] = eig_apply(ew, [](double l) { return 1.0 / std::sqrt(l); });
  }

  h_.assign(C.nn_coord.size(), 0.0);
  for (std::size_t k = 0; k < C.nn_coord.size(); ++k) {
    const double zi = z[C.nn_coord[k]];
    const double si = s[C.nn_coord[k]];
    if (!(zi > 0.0) || !(si > 0.0)) return false;
    h_[k] = zi / si;
  }
  return true;
}

// Plain (unblocked) Cholesky and triangular solves in long double, for the
// extended-precision fallback only; the hot double path keeps the blocked
// routines.
namespace {

using LVec = std::vector<long double>;

bool chol_ld(std::size_t n, LVec& a) {
  long double* A = a.data();
  for (std::size_t j = 0; j < n; ++j) {
    long double d = A[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
    if (!(d > 0.0L)) return false;
    d = sqrtl(d);
    A[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      long double s = A[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
      A[i * n + j] = s / d;
    }
  }
  return true;
}

void solve_lo_ld(std::size_t n, const LVec& l, LVec& x) {
  const long double* L = l.data();
  for (std::size_t i = 0; i < n; ++i) {
    long double s = x[i];
    for (std::size_t j = 0; j < i; ++j) s -= L[i * n + j] * x[j];
    x[i] = s / L[i * n + i];
  }
}

void solve_lo_t_ld(std::size_t n, const LVec& l, LVec& x) {
  const long double* L = l.data();
  for (std::size_t i = n; i-- > 0;) {
    long double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= L[j * n + i] * x[j];
    x[i] = s / L[i * n + i];
  }
}

void solve_lo_multi_ld(std::size_t n, const LVec& l, std::size_t nrhs, LVec& x) {
  const long double* L = l.data();
  for (std::size_t i = 0; i < n; ++i) {
    long double* xi = x.data() + i * nrhs;
    for (std::size_t j = 0; j < i; ++j) {
      const long double lij = L[i * n + j];
      if (lij == 0.0L) continue;
      const long double* xj = x.data() + j * nrhs;
      for (std::size_t c = 0; c < nrhs; ++c) xi[c] -= lij * xj[c];
    }
    const long double d = L[i * n + i];
    for (std::size_t c = 0; c < nrhs; ++c) xi[c] /= d;
  }
}

}  // namespace

// Schur complement A_C H A_C' accumulated in the given precision.
//
// PSD contributions: for rows r1, r2 with symmetric-entry parts
// (i,j,g1), (u,v,g2) on the same block,
//   <A1, W A2 W> = sum 2 gs1 gs2 (W_iu W_jv + W_iv W_ju),
// with the diagonal half-weights already folded into gs.
template <typename T>
void Ipm::assemble_schur(std::vector<T>& M) const {
  const std::size_t m = C.m;
  M.assign(m * m, T(0));

  for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
    const std::size_t d = C.psd[sblk].d;
    const double* W = W_[sblk].data();
    const auto& spans = C.spans[sblk];
    const auto& parts = C.parts[sblk];
    for (std::size_t a1 = 0; a1 < spans.size(); ++a1) {
      const auto& s1 = spans[a1];
      T* mrow = M.data() + std::size_t(s1.row) * m;
      for (std::size_t a2 = 0; a2 <= a1; ++a2) {
        const auto& s2 = spans[a2];
        T acc = T(0);
        for (int e1 = s1.begin; e1 < s1.end; ++e1) {
          const auto& p1 = parts[e1];
          const double* wi = W + std::size_t(p1.i) * d;
          const double* wj = W + std::size_t(p1.j) * d;
          for (int e2 = s2.begin; e2 < s2.end; ++e2) {
            const auto& p2 = parts[e2];
            acc += T(p1.gs) * T(p2.gs) *
                   (T(wi[p2.i]) * T(wj[p2.j]) + T(wi[p2.j]) * T(wj[p2.i]));
          }
        }
        mrow[s2.row] += T(2) * acc;
      }
    }
  }

  // Nonnegative contributions, column by column.
  for (std::size_t k = 0; k < C.nn_cols.size(); ++k) {
    const auto& col = C.nn_cols[k];
    const T hk = T(h_[k]);
    for (std::size_t p1 = 0; p1 < col.size(); ++p1)
      for (std::size_t p2 = 0; p2 <= p1; ++p2)
        M[std::size_t(col[p1].first) * m + col[p2].first] +=
            T(col[p1].second) * hk * T(col[p2].second);
  }
}

bool Ipm::assemble_and_factor() {
  if (use_ld_) return factor_extended();

  const std::size_t m = C.m;
  assemble_schur(M_);

  // Regularize proportionally to each row's own diagonal (the diagonal spans
  // many orders of magnitude near convergence, and a shift sized by the
  // largest entry would swamp the small curvature directions), escalating on
  // factorization failure.
  for (double delta = 1e-12; delta <= 1.1e-6; delta *= 10.0) {
    L_ = M_;
    for (std::size_t i = 0; i < m; ++i)
      L_[i * m + i] += delta * (std::abs(M_[i * m + i]) + 1.0);
    if (cholesky_inplace(m, L_)) {
      // Free columns: U = L^{-1} A_F and the small Schur complement U'U.
      if (C.f > 0) {
        U_ = C.AF;
        solve_lower_multi(m, L_, C.f, U_);
        Vec sf(C.f * C.f, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const double* ui = U_.data() + i * C.f;
          for (std::size_t a = 0; a < C.f; ++a) {
            const double uia = ui[a];
            if (uia == 0.0) continue;
            double* row = sf.data() + a * C.f;
            for (std::size_t bcol = 0; bcol <= a; ++bcol) row[bcol] += uia * ui[bcol];
          }
        }
        double sf_scale = 1.0;
        for (std::size_t a = 0; a < C.f; ++a)
          sf_scale = std::max(sf_scale, std::abs(sf[a * C.f + a]));
        bool ok = false;
        for (double df = 1e-12; df <= 1.1e-6; df *= 10.0) {
          SFL_ = sf;
          for (std::size_t a = 0; a < C.f; ++a) SFL_[a * C.f + a] += df * sf_scale;
          if (cholesky_inplace(C.f, SFL_)) {
            ok = true;
            break;
          }
        }
        if (!ok) continue;  // escalate the outer regularization
      }
      return true;
    }
  }
  return false;
}

// Long-double mirror of the factorization path. The regularization ladder
// starts two orders under the double one's floor: the wider mantissa keeps
// the factorization stable with far smaller shifts.
bool Ipm::factor_extended() {
  const std::size_t m = C.m;
  assemble_schur(Mld_);

  for (long double delta = 1e-14L; delta <= 1.1e-6L; delta *= 10.0L) {
    Lld_ = Mld_;
    for (std::size_t i = 0; i < m; ++i)
      Lld_[i * m + i] += delta * (fabsl(Mld_[i * m + i]) + 1.0L);
    if (chol_ld(m, Lld_)) {
      if (C.f > 0) {
        Uld_.assign(C.AF.begin(), C.AF.end());
        solve_lo_multi_ld(m, Lld_, C.f, Uld_);
        LVec sf(C.f * C.f, 0.0L);
        for (std::size_t i = 0; i < m; ++i) {
          const long double* ui = Uld_.data() + i * C.f;
          for (std::size_t a = 0; a < C.f; ++a) {
            const long double uia = ui[a];
            if (uia == 0.0L) continue;
            long double* row = sf.data() + a * C.f;
            for (std::size_t bcol = 0; bcol <= a; ++bcol) row[bcol] += uia * ui[bcol];
          }
        }
        long double sf_scale = 1.0L;
        for (std::size_t a = 0; a < C.f; ++a)
          sf_scale = std::max(sf_scale, fabsl(sf[a * C.f + a]));
        bool ok = false;
        for (long double df = 1e-14L; df <= 1.1e-6L; df *= 10.0L) {
          SFLld_ = sf;
          for (std::size_t a = 0; a < C.f; ++a) SFLld_[a * C.f + a] += df * sf_scale;
          if (chol_ld(C.f, SFLld_)) {
            ok = true;
            break;
          }
        }
        if (!ok) continue;
      }
      return true;
    }
  }
  return false;
}

void Ipm::saddle_solve(const Vec& r1, const Vec& r2, Vec& dy, Vec& dzF) const {
  if (use_ld_) {
    saddle_solve_ld(r1, r2, dy, dzF);
    return;
  }
  Vec t1 = r1;
  solve_lower(C.m, L_, t1);
  if (C.f > 0) {
    Vec rhsF(C.f, 0.0);
    for (std::size_t i = 0; i < C.m; ++i) {
      const double t = t1[i];
      if (t == 0.0) continue;
      const double* ui = U_.data() + i * C.f;
      for (std::size_t a = 0; a < C.f; ++a) rhsF[a] += ui[a] * t;
    }
    for (std::size_t a = 0; a < C.f; ++a) rhsF[a] -= r2[a];
    solve_lower(C.f, SFL_, rhsF);
    solve_lower_t(C.f, SFL_, rhsF);
    dzF = rhsF;
    for (std::size_t i = 0; i < C.m; ++i) {
      const double* ui = U_.data() + i * C.f;
      double acc = 0.0;
      for (std::size_t a = 0; a < C.f; ++a) acc += ui[a] * dzF[a];
      t1[i] -= acc;
    }
  } else {
    dzF.clear();
  }
  dy = t1;
  solve_lower_t(C.m, L_, dy);
}

void Ipm::saddle_solve_ld(const Vec& r1, const Vec& r2, Vec& dy, Vec& dzF) const {
  LVec t1(r1.begin(), r1.end());
  solve_lo_ld(C.m, Lld_, t1);
  if (C.f > 0) {
    LVec rhsF(C.f, 0.0L);
    for (std::size_t i = 0; i < C.m; ++i) {
      const long double t = t1[i];
      if (t == 0.0L) continue;
      const long double* ui = Uld_.data() + i * C.f;
      for (std::size_t a = 0; a < C.f; ++a) rhsF[a] += ui[a] * t;
    }
    for (std::size_t a = 0; a < C.f; ++a) rhsF[a] -= r2[a];
    solve_lo_ld(C.f, SFLld_, rhsF);
    solve_lo_t_ld(C.f, SFLld_, rhsF);
    dzF.resize(C.f);
    for (std::size_t a = 0; a < C.f; ++a) dzF[a] = double(rhsF[a]);
    for (std::size_t i = 0; i < C.m; ++i) {
      const long double* ui = Uld_.data() + i * C.f;
      long double acc = 0.0L;
      for (std::size_t a = 0; a < C.f; ++a) acc += ui[a] * rhsF[a];
      t1[i] -= acc;
    }
  } else {
    dzF.clear();
  }
  solve_lo_t_ld(C.m, Lld_, t1);
  dy.resize(C.m);
  for (std::size_t i = 0; i < C.m; ++i) dy[i] = double(t1[i]);
}

// True residual of the saddle equations at (dy, dzF), with every product and
// sum carried in long double. Near convergence the scaled operator A H A'
// holds entries of magnitude ~1/mu whose products against an O(1) vector
// cancel down to the residual scale; in plain double that cancellation noise
// (~1e-7 at mu ~ 1e-9) buries exactly the error refinement needs to see.
void Ipm::refine_residual(const Vec& r1, const Vec& r2, const Vec& dy,
                          const Vec& dzF, Vec& res1, Vec& res2) const {
  using LD = long double;
  // t = A' dy.
  std::vector<LD> t(C.N, 0.0L);
  for (std::size_t r = 0; r < C.m; ++r) {
    const LD yr = dy[r];
    if (yr == 0.0L) continue;
    const SparseRow& row = (*C.rows)[r];
    for (std::size_t k = 0; k < row.idx.size(); ++k)
      t[row.idx[k]] += LD(row.val[k]) * yr;
  }

  // u = H t: W X W per PSD block, h_i t_i per nonnegative; free stay zero.
  std::vector<LD> u(C.N, 0.0L);
  const LD inv_rt2 = LD(1.0) / LD(std::sqrt(2.0));
  const LD rt2 = LD(std::sqrt(2.0));
  std::vector<LD> x, wx, wxw;
  for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
    const auto& pb = C.psd[sblk];
    const std::size_t d = pb.d;
    const double* W = W_[sblk].data();
    x.assign(d * d, 0.0L);
    std::size_t k = 0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = j; i < d; ++i, ++k) {
        const LD raw = t[pb.coord0 + k];
        const LD val = (i == j) ? raw : raw * inv_rt2;
        x[i * d + j] = val;
        x[j * d + i] = val;
      }
    wx.assign(d * d, 0.0L);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t p = 0; p < d; ++p) {
        const LD wip = W[i * d + p];
        if (wip == 0.0L) continue;
        for (std::size_t j = 0; j < d; ++j) wx[i * d + j] += wip * x[p * d + j];
      }
    wxw.assign(d * d, 0.0L);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t p = 0; p < d; ++p) {
        const LD v = wx[i * d + p];
        if (v == 0.0L) continue;
        for (std::size_t j = 0; j < d; ++j) wxw[i * d + j] += v * LD(W[p * d + j]);
      }
    k = 0;
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = j; i < d; ++i, ++k)
        u[pb.coord0 + k] = (i == j)
                               ? wxw[j * d + j]
                               : LD(0.5) * (wxw[i * d + j] + wxw[j * d + i]) * rt2;
  }
  for (std::size_t q = 0; q < C.nn_coord.size(); ++q) {
    const std::size_t cd = C.nn_coord[q];
    u[cd] = LD(h_[q]) * t[cd];
  }

  // res1 = r1 - A u - A_F dzF, rounded only at the end.
  res1.assign(C.m, 0.0);
  for (std::size_t r = 0; r < C.m; ++r) {
    LD acc = r1[r];
    const SparseRow& row = (*C.rows)[r];
    for (std::size_t k = 0; k < row.idx.size(); ++k)
      acc -= LD(row.val[k]) * u[row.idx[k]];
    if (C.f > 0) {
      const double* afr = C.AF.data() + r * C.f;
      for (std::size_t a = 0; a < C.f; ++a) acc -= LD(afr[a]) * LD(dzF[a]);
    }
    res1[r] = double(acc);
  }

  // res2 = r2 - A_F' dy.
  res2.assign(C.f, 0.0);
  if (C.f > 0) {
    std::vector<LD> acc2(C.f, 0.0L);
    for (std::size_t i = 0; i < C.m; ++i) {
      const LD yi = dy[i];
      if (yi == 0.0L) continue;
      const double* afi = C.AF.data() + i * C.f;
      for (std::size_t a = 0; a < C.f; ++a) acc2[a] += LD(afi[a]) * yi;
    }
    for (std::size_t a = 0; a < C.f; ++a) res2[a] = double(LD(r2[a]) - acc2[a]);
  }
}

bool Ipm::newton_solve(const Vec& rc, const Vec& rp, const Vec& rd,
                       Direction& out) const {
  // Eliminate ds on cone coordinates and dz on free ones:
  //   [M  A_F; A_F' 0] [dy; dzF] = [rp - A_C(rc - H rd_C); rd_F].
  Vec g = apply_h(rd);
  for (std::size_t i = 0; i < C.N; ++i) g[i] = -g[i];
  for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
    const auto& pb = C.psd[sblk];
    for (std::size_t k = 0; k < packed_size(pb.d); ++k)
      g[pb.coord0 + k] += rc[pb.coord0 + k];
  }
  for (std::size_t coord : C.nn_coord) g[coord] += rc[coord];

  Vec r1 = az(g);
  for (std::size_t r = 0; r < C.m; ++r) r1[r] = rp[r] - r1[r];
  Vec r2(C.f, 0.0);
  for (std::size_t a = 0; a < C.f; ++a) r2[a] = rd[C.free_coord[a]];

  Vec dy, dzF;
  saddle_solve(r1, r2, dy, dzF);

  // Refinement against the unregularized saddle system (the factorization
  // carries the delta shift): repeat while the true residual keeps
  // shrinking, which matters most in the endgame where the scaling is
  // ill-conditioned and a single pass leaves noticeable error behind.
  {
    const double rhs_norm = 1.0 + norm_inf(r1) + (C.f > 0 ? norm_inf(r2) : 0.0);
    double prev_norm = kInf;
    Vec res1, res2;
    for (int pass = 0; pass < 3; ++pass) {
      refine_residual(r1, r2, dy, dzF, res1, res2);
      const double res_norm = norm_inf(res1) + (C.f > 0 ? norm_inf(res2) : 0.0);
      refine_ratio_ = res_norm / rhs_norm;
      if (res_norm <= 1e-15 * rhs_norm || res_norm >= 0.5 * prev_norm) break;
      prev_norm = res_norm;
      Vec cdy, cdzF;
      saddle_solve(res1, res2, cdy, cdzF);
      for (std::size_t i = 0; i < C.m; ++i) dy[i] += cdy[i];
      for (std::size_t a = 0; a < C.f; ++a) dzF[a] += cdzF[a];
    }
  }

  // Recover ds and dz.
  Vec atdy = aty(dy);
  out.ds.assign(C.N, 0.0);
  for (std::size_t i = 0; i < C.N; ++i) out.ds[i] = rd[i] - atdy[i];
  for (std::size_t a = 0; a < C.f; ++a) out.ds[C.free_coord[a]] = 0.0;

  Vec hds = apply_h(out.ds);
  out.dz.assign(C.N, 0.0);
  for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
    const auto& pb = C.psd[sblk];
    for (std::size_t k = 0; k < packed_size(pb.d); ++k) {
      const std::size_t cd = pb.coord0 + k;
      out.dz[cd] = rc[cd] - hds[cd];
    }
  }
  for (std::size_t coord : C.nn_coord) out.dz[coord] = rc[coord] - hds[coord];
  for (std::size_t a = 0; a < C.f; ++a) out.dz[C.free_coord[a]] = dzF[a];
  out.dy = std::move(dy);

  for (double v : out.dz)
    if (!std::isfinite(v)) return false;
  for (double v : out.dy)
    if (!std::isfinite(v)) return false;
  for (double v : out.ds)
    if (!std::isfinite(v)) return false;
  return true;
}

// Largest t with iterate + t*direction staying in the cone (PSD blocks via
// lambda_min of Zi^{-1/2} dZ Zi^{-1/2}, nonnegatives via ratios).
double Ipm::max_step_cone(const Vec& v, const Vec& dv,
                          const std::vector<EigResult>& eigs) const {
  double alpha = kInf;
  Vec dd, gih, t1, t2;
  for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
    const auto& pb = C.psd[sblk];
    unpack_slice(dv, pb.coord0, pb.d, dd);
    gih = eig_apply(eigs[sblk], [](double l) { return 1.0 / std::sqrt(l); });
    t1 = matmul(pb.d, gih, dd);
    t2 = matmul(pb.d, t1, gih);
    const double lmin = eig_sym(to_sym(pb.d, t2)).values.front();
    if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
  }
  for (std::size_t k = 0; k < C.nn_coord.size(); ++k) {
    const double vi = v[C.nn_coord[k]];
    const double di = dv[C.nn_coord[k]];
    if (di < 0.0) alpha = std::min(alpha, -vi / di);
  }
  return alpha;
}

// Infeasibility certificates from the current iterate: y certifies primal
// infeasibility when b'y > 0 and -A'y (nearly) lies in the dual cone; z
// certifies dual infeasibility when c'z < 0 and A z (nearly) vanishes with
// z in the cone.
void Ipm::certificate_checks(bool loose, SolveStatus* verdict) const {
  const double eps = loose ? 1e-4 : st_.feas_tol;

  const double by = dot(C.b, y);
  if (by > 0.0) {
    Vec v = aty(y);
    double metric = 0.0;
    for (std::size_t a = 0; a < C.f; ++a)
      metric = std::max(metric, std::abs(v[C.free_coord[a]]));
    for (std::size_t coord : C.nn_coord)
      metric = std::max(metric, std::max(v[coord], 0.0));
    Vec dense;
    for (const auto& pb : C.psd) {
      unpack_slice(v, pb.coord0, pb.d, dense);
      metric = std::max(metric, eig_sym(to_sym(pb.d, dense)).values.back());
    }
    if (metric <= eps * by) {
      *verdict = SolveStatus::PrimalInfeasible;
      return;
    }
  }

  const double cz = dot(C.c, z);
  if (cz < 0.0) {
    Vec azv = az(z);
    double metric = norm_inf(azv);
    if (metric <= eps * (-cz)) {
      *verdict = SolveStatus::DualInfeasible;
      return;
    }
  }
}

void Ipm::run() {
  const std::size_t N = C.N, m = C.m;
  if (m == 0) throw DimensionError("solve_conic: program has no rows");
  if (C.nu == 0) throw Error("solve_conic: program has no cone coordinates");

  bnorm_ = norm_inf(C.b);
  cnorm_ = norm_inf(C.c);
  eta_ = std::max({1.0, bnorm_, cnorm_});

  // Cold start: identity-like interior points scaled by the data norm.
  z.assign(N, 0.0);
  s.assign(N, 0.0);
  y.assign(m, 0.0);
  for (const auto& pb : C.psd) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < pb.d; ++j)
      for (std::size_t i = j; i < pb.d; ++i, ++k)
        if (i == j) {
          z[pb.coord0 + k] = eta_;
          s[pb.coord0 + k] = eta_;
        }
  }
  for (std::size_t coord : C.nn_coord) {
    z[coord] = eta_;
    s[coord] = eta_;
  }

  double mu0 = 0.0;
  int stall_count = 0;

  for (int iter = 0;; ++iter) {
    // Residuals and objective values.
    Vec azv = az(z);
    Vec rp(m);
    for (std::size_t r = 0; r < m; ++r) rp[r] = C.b[r] - azv[r];
    Vec atyv = aty(y);
    Vec rd(N);
    for (std::size_t i = 0; i < N; ++i) rd[i] = C.c[i] - atyv[i] - s[i];

    const double pobj = dot(C.c, z);
    const double dobj = dot(C.b, y);
    double zs = 0.0;
    for (const auto& pb : C.psd)
      for (std::size_t k = 0; k < packed_size(pb.d); ++k)
        zs += z[pb.coord0 + k] * s[pb.coord0 + k];
    for (std::size_t coord : C.nn_coord) zs += z[coord] * s[coord];
    const double mu = zs / double(C.nu);
    if (iter == 0) mu0 = mu;

    const double rel_pres = norm_inf(rp) / (1.0 + bnorm_);
    const double rel_dres = norm_inf(rd) / (1.0 + cnorm_);
    const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    trace.push_back({pobj, dobj, mu, rel_pres, rel_dres});
    iterations = iter;

    if (rel_pres <= st_.feas_tol && rel_dres <= st_.feas_tol && rel_gap <= st_.gap_tol) {
      status = SolveStatus::Optimal;
      return;
    }
    const double merit = std::max({rel_pres / st_.feas_tol, rel_dres / st_.feas_tol,
                                   rel_gap / st_.gap_tol});
    if (merit < best_merit_) {
      best_merit_ = merit;
      zbest_ = z;
      ybest_ = y;
      sbest_ = s;
    }
    if (iter >= 20) {
      SolveStatus verdict = status;
      certificate_checks(/*loose=*/false, &verdict);
      if (verdict == SolveStatus::PrimalInfeasible ||
          verdict == SolveStatus::DualInfeasible) {
        status = verdict;
        return;
      }
    }
    if (iter >= 50) {
      // Divergence heuristics: iterates racing to infinity (or mu exploding)
      // indicate an infeasible/unbounded instance; classify by whichever
      // approximate certificate looks best, otherwise give up.
      if (norm_inf(z) > 1e13 * eta_ || norm_inf(y) > 1e13 * eta_ ||
          mu > 1e10 * (1.0 + mu0)) {
        status = classify_breakdown_keep_best();
        return;
      }
    }
    if (iter >= st_.max_iterations) {
      status = SolveStatus::MaxIterations;
      restore_best();
      return;
    }

    if (!compute_scaling() || !assemble_and_factor()) {
      status = classify_breakdown_keep_best();
      return;
    }

    // Predictor: pure Newton step toward complementarity zero.
    Vec rc(N, 0.0);
    for (const auto& pb : C.psd)
      for (std::size_t k = 0; k < packed_size(pb.d); ++k)
        rc[pb.coord0 + k] = -z[pb.coord0 + k];
    for (std::size_t coord : C.nn_coord) rc[coord] = -z[coord];

    Direction aff;
    if (!newton_solve(rc, rp, rd, aff)) {
      status = classify_breakdown_keep_best();
      return;
    }

    // Switch this solve to extended precision when the endgame's corrections
    // stop contracting: past that point every direction carries an error the
    // double factorization cannot remove, and iterating just grinds.
    if (!use_ld_ && mu <= 1e-3 * (1.0 + mu0) &&
        refine_ratio_ > 0.1 * st_.feas_tol) {
      use_ld_ = true;
      if (!assemble_and_factor() || !newton_solve(rc, rp, rd, aff)) {
        status = classify_breakdown_keep_best();
        return;
      }
    }

    const double ap_aff = std::min(1.0, max_step_cone(z, aff.dz, eigZ_));
    const double ad_aff = std::min(1.0, max_step_cone(s, aff.ds, eigS_));

    double zs_aff = 0.0;
    for (const auto& pb : C.psd)
      for (std::size_t k = 0; k < packed_size(pb.d); ++k) {
        const std::size_t cd = pb.coord0 + k;
        zs_aff += (z[cd] + ap_aff * aff.dz[cd]) * (s[cd] + ad_aff * aff.ds[cd]);
      }
    for (std::size_t coord : C.nn_coord)
      zs_aff += (z[coord] + ap_aff * aff.dz[coord]) * (s[coord] + ad_aff * aff.ds[coord]);
    const double mu_aff = zs_aff / double(C.nu);
    double sigma = (mu > 0.0) ? (mu_aff / mu) : 0.0;
    sigma = std::min(1.0, std::max(0.0, sigma * sigma * sigma));

    // Centering target, floored: pushing complementarity far below what the
    // gap tolerance requires only blows up the scaling condition (~1/mu) and
    // with it the accuracy of the Schur solves, so aim an order under the
    // certifiable level and no lower.
    const double mu_floor =
        0.4 * st_.gap_tol * (1.0 + std::abs(pobj) + std::abs(dobj)) / double(C.nu);
    const double smu = std::max(sigma * mu, mu_floor);

    // Corrector: centering + second-order term, solved per block in the
    // eigenbasis of the scaled point V = W^{-1/2} Z W^{-1/2}.
    Vec dd1, dd2, va, vb, prod, r_mat;
    for (std::size_t sblk = 0; sblk < C.psd.size(); ++sblk) {
      const auto& pb = C.psd[sblk];
      const std::size_t d = pb.d;

      unpack_slice(aff.dz, pb.coord0, d, dd1);
      unpack_slice(aff.ds, pb.coord0, d, dd2);
      va = matmul(d, matmul(d, Wih_[sblk], dd1), Wih_[sblk]);  // scaled dZ_aff
      vb = matmul(d, matmul(d, Wh_[sblk], dd2), Wh_[sblk]);    // scaled dS_aff

      Vec vmat = matmul(d, matmul(d, Wih_[sblk], Zd_[sblk]), Wih_[sblk]);
      const EigResult ev = eig_sym(to_sym(d, vmat));

      prod = matmul(d, va, vb);
      r_mat.assign(d * d, 0.0);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double vv = 0.0;
          for (std::size_t k = 0; k < d; ++k)
            vv += vmat[i * d + k] * vmat[k * d + j];
          r_mat[i * d + j] = ((i == j) ? smu : 0.0) - vv -
                             0.5 * (prod[i * d + j] + prod[j * d + i]);
        }

      // Lyapunov solve (V U + U V)/2 = R in V's eigenbasis.
      Vec rt(d * d, 0.0);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = 0; q < d; ++q)
              acc += ev.vector_entry(p, i) * r_mat[p * d + q] * ev.vector_entry(q, j);
          rt[i * d + j] = acc;
        }
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double den = std::max(ev.values[i] + ev.values[j], 1e-300);
          rt[i * d + j] = 2.0 * rt[i * d + j] / den;
        }
      Vec u(d * d, 0.0);
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) {
          double acc = 0.0;
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
              acc += ev.vector_entry(p, i) * rt[i * d + j] * ev.vector_entry(q, j);
          u[p * d + q] = acc;
        }
      Vec rc_mat = matmul(d, matmul(d, Wh_[sblk], u), Wh_[sblk]);
      pack_slice(rc_mat, d, rc, pb.coord0);
    }
    for (std::size_t k = 0; k < C.nn_coord.size(); ++k) {
      const std::size_t cd = C.nn_coord[k];
      rc[cd] = (smu - aff.dz[cd] * aff.ds[cd]) / s[cd] - z[cd];
    }

    Direction dir;
    if (!newton_solve(rc, rp, rd, dir)) {
      status = classify_breakdown_keep_best();
      return;
    }

    const double gamma = st_.boundary_factor;
    const double ap = std::min(1.0, gamma * max_step_cone(z, dir.dz, eigZ_));
    const double ad = std::min(1.0, gamma * max_step_cone(s, dir.ds, eigS_));

    for (std::size_t i = 0; i < N; ++i) z[i] += ap * dir.dz[i];
    for (std::size_t r = 0; r < m; ++r) y[r] += ad * dir.dy[r];
    for (std::size_t i = 0; i < N; ++i) s[i] += ad * dir.ds[i];

    if (ap < 1e-8 && ad < 1e-8) {
      if (++stall_count >= 3) {
        status = classify_breakdown_keep_best();
        return;
      }
    } else {
      stall_count = 0;
    }
  }
}

// ---------------------------------------------------------------------------
// Backends and the public solve entry points.

class InternalBackend final : public ConicBackend {
 public:
  ConicSolution solve(const ConicProgram& p, const SolverSettings& st) override {
    p.check_well_formed();
    st.check_valid();

    ConicSolution sol;
    Presolved ps = presolve(p);
    if (ps.trivially_infeasible) {
      sol.status = SolveStatus::PrimalInfeasible;
      sol.z.assign(p.num_coords(), 0.0);
      sol.y.assign(p.rows.size(), 0.0);
      sol.s.assign(p.num_coords(), 0.0);
      return sol;
    }

    Compiled c = compile(ps.prog);
    Ipm ipm(c, st);
    ipm.run();

    sol.status = ipm.status;
    sol.iterations = ipm.iterations;
    if (st.record_trace) sol.trace = std::move(ipm.trace);

    // Map back to the original row space (columns were untouched).
    sol.z = std::move(ipm.z);
    sol.s = std::move(ipm.s);
    sol.y.assign(p.rows.size(), 0.0);
    for (std::size_t r = 0; r < ps.orig_row.size(); ++r)
      sol.y[ps.orig_row[r]] = ipm.y[r] * ps.scale[r];

    // Report objective values and residuals against the original program.
    sol.pobj = dot(p.objective, sol.z);
    double dobj = 0.0;
    for (std::size_t r = 0; r < p.rows.size(); ++r) dobj += p.rows[r].rhs * sol.y[r];
    sol.dobj = dobj;

    double bn = 0.0;
    for (const SparseRow& r : p.rows) bn = std::max(bn, std::abs(r.rhs));
    double pres = 0.0;
    for (const SparseRow& r : p.rows) {
      double acc = -r.rhs;
      for (std::size_t k = 0; k < r.idx.size(); ++k) acc += r.val[k] * sol.z[r.idx[k]];
      pres = std::max(pres, std::abs(acc));
    }
    Vec atyv(p.num_coords(), 0.0);
    for (std::size_t r = 0; r < p.rows.size(); ++r) {
      const double yr = sol.y[r];
      if (yr == 0.0) continue;
      const SparseRow& row = p.rows[r];
      for (std::size_t k = 0; k < row.idx.size(); ++k)
        atyv[row.idx[k]] += row.val[k] * yr;
    }
    double dres = 0.0;
    for (std::size_t i = 0; i < p.num_coords(); ++i)
      dres = std::max(dres, std::abs(p.objective[i] - atyv[i] - sol.s[i]));

    sol.rel_pres = pres / (1.0 + bn);
    sol.rel_dres = dres / (1.0 + norm_inf(p.objective));
    sol.rel_gap =
        std::abs(sol.pobj - sol.dobj) / (1.0 + std::abs(sol.pobj) + std::abs(sol.dobj));
    return sol;
  }
};

class DumpBackend final : public ConicBackend {
 public:
  ConicSolution solve(const ConicProgram& p, const SolverSettings& st) override {
    p.check_well_formed();
    if (st.dump_path.empty()) throw IoError("dump backend: no dump_path set");
    dump_program(p, st.dump_path);
    ConicSolution sol;  // placeholder: nothing was solved
    sol.status = SolveStatus::NumericalFailure;
    sol.z.assign(p.num_coords(), 0.0);
    sol.y.assign(p.rows.size(), 0.0);
    sol.s.assign(p.num_coords(), 0.0);
    return sol;
  }
};

}  // namespace

ConicSolution solve_conic_with(ConicBackend& backend, const ConicProgram& p,
                               const SolverSettings& s) {
  return backend.solve(p, s);
}

ConicSolution solve_conic(const ConicProgram& p, const SolverSettings& s) {
  if (s.backend == SolverSettings::Backend::Dump) {
    DumpBackend b;
    return solve_conic_with(b, p, s);
  }
  InternalBackend b;
  return solve_conic_with(b, p, s);
}

// ---------------------------------------------------------------------------
// Independent solution validation.

ValidationReport validate_solution(const ConicProgram& p, const ConicSolution& sol,
                                   double tol) {
  ValidationReport rep;
  const std::size_t N = p.num_coords();
  const std::size_t m = p.rows.size();
  if (sol.z.size() != N || sol.s.size() != N || sol.y.size() != m) {
    rep.violations.push_back({"solution dimensions do not match program", 0.0});
    return rep;
  }

  double bn = 0.0;
  for (const SparseRow& r : p.rows) bn = std::max(bn, std::abs(r.rhs));

  double pres = 0.0;
  for (const SparseRow& r : p.rows) {
    double acc = -r.rhs;
    for (std::size_t k = 0; k < r.idx.size(); ++k) acc += r.val[k] * sol.z[r.idx[k]];
    pres = std::max(pres, std::abs(acc));
  }
  pres /= 1.0 + bn;
  if (pres > tol) rep.violations.push_back({"primal equality residual", pres});

  Vec atyv(N, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double yr = sol.y[r];
    if (yr == 0.0) continue;
    const SparseRow& row = p.rows[r];
    for (std::size_t k = 0; k < row.idx.size(); ++k)
      atyv[row.idx[k]] += row.val[k] * yr;
  }
  double dres = 0.0;
  for (std::size_t i = 0; i < N; ++i)
    dres = std::max(dres, std::abs(p.objective[i] - atyv[i] - sol.s[i]));
  dres /= 1.0 + norm_inf(p.objective);
  if (dres > tol) rep.violations.push_back({"dual equality residual", dres});

  // Cone membership margins, block by block.
  std::size_t off = 0;
  for (const ConeBlock& b : p.blocks) {
    if (b.kind == BlockKind::Psd) {
      Vec packed_z(sol.z.begin() + off, sol.z.begin() + off + b.coords());
      Vec packed_s(sol.s.begin() + off, sol.s.begin() + off + b.coords());
      SymMatrix Z = unpack_scaled(b.dim, packed_z);
      SymMatrix S = unpack_scaled(b.dim, packed_s);
      const double lz = min_eigenvalue(Z);
      if (lz < -tol * (1.0 + Z.max_abs()))
        rep.violations.push_back({"primal PSD membership", -lz});
      const double ls = min_eigenvalue(S);
      if (ls < -tol * (1.0 + S.max_abs()))
        rep.violations.push_back({"dual PSD membership", -ls});
    } else if (b.kind == BlockKind::NonNeg) {
      for (std::size_t k = 0; k < b.dim; ++k) {
        if (sol.z[off + k] < -tol)
          rep.violations.push_back({"primal nonnegativity", -sol.z[off + k]});
        if (sol.s[off + k] < -tol)
          rep.violations.push_back({"dual nonnegativity", -sol.s[off + k]});
      }
    } else {
      for (std::size_t k = 0; k < b.dim; ++k)
        if (std::abs(sol.s[off + k]) > tol)
          rep.violations.push_back(
              {"dual slack on free coordinate", std::abs(sol.s[off + k])});
    }
    off += b.coords();
  }

  // Reported objectives must match recomputation (this catches swapped or
  // stale objective fields), and the recomputed duality gap must close.
  const double pobj = dot(p.objective, sol.z);
  double dobj = 0.0;
  for (std::size_t r = 0; r < m; ++r) dobj += p.rows[r].rhs * sol.y[r];
  const double oscale = 1.0 + std::abs(pobj) + std::abs(dobj);
  if (std::abs(sol.pobj - pobj) > tol * oscale)
    rep.violations.push_back({"reported primal objective", std::abs(sol.pobj - pobj)});
  if (std::abs(sol.dobj - dobj) > tol * oscale)
    rep.violations.push_back({"reported dual objective", std::abs(sol.dobj - dobj)});
  const double gap = std::abs(pobj - dobj) / oscale;
  if (gap > tol) rep.violations.push_back({"duality gap", gap});

  return rep;
}

}  // namespace qsmbox
