// Standard-form conic programs  min c'z  s.t.  A z = b,  z in K  with
// K a product of PSD, nonnegative-orthant, and free blocks, plus a
// self-contained primal-dual interior-point solver (Nesterov-Todd scaling,
// Mehrotra predictor-corrector, dense Schur complement).
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qsmbox/common.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

enum class BlockKind { Psd, NonNeg, Free };

struct ConeBlock {
  BlockKind kind;
  // Psd: matrix order d (occupying d(d+1)/2 packed coordinates);
  // NonNeg/Free: coordinate count.
  std::size_t dim;
  std::size_t coords() const {
    return kind == BlockKind::Psd ? dim * (dim + 1) / 2 : dim;
  }
};

struct SparseRow {
  std::vector<std::size_t> idx;
  Vec val;
  double rhs = 0.0;
};

// PSD block coordinates use the scaled lower-triangle packing from symmat
// (off-diagonals carry a sqrt(2) factor), so packed dot products equal
// matrix inner products.
struct ConicProgram {
  std::vector<ConeBlock> blocks;
  Vec objective;
  std::vector<SparseRow> rows;

  std::size_t num_coords() const;
  // Throws DimensionError if the objective length or any row index is
  // inconsistent with the block layout.
  void check_well_formed() const;
};

enum class SolveStatus {
  Optimal,
  PrimalInfeasible,
  DualInfeasible,
  MaxIterations,
  NumericalFailure,
};
const char* to_string(SolveStatus s);

struct IterateRecord {
  double pobj, dobj, mu, rel_pres, rel_dres;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vec z;  // primal point (certificate ray when DualInfeasible)
  Vec y;  // equality multipliers (certificate ray when PrimalInfeasible)
  Vec s;  // dual cone slack
  double pobj = 0.0;
  double dobj = 0.0;
  double rel_gap = 0.0;
  double rel_pres = 0.0;
  double rel_dres = 0.0;
  int iterations = 0;
  // One record per iteration when SolverSettings::record_trace is set.
  std::vector<IterateRecord> trace;
};

struct SolverSettings {
  double gap_tol = 1e-8;
  double feas_tol = 1e-8;
  int max_iterations = 200;
  double boundary_factor = 0.99;
  enum class Backend { Internal, Dump } backend = Backend::Internal;
  std::string dump_path;  // used by the Dump backend
  bool record_trace = false;

  // Throws Error unless tolerances are positive and the boundary factor is
  // in (0,1).
  void check_valid() const;
};

// Seam for swapping the solver implementation (e.g. cross-checking against
// an external solver, or canned solutions in tests) without touching callers.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual ConicSolution solve(const ConicProgram& p, const SolverSettings& s) = 0;
};

// Dispatches on settings.backend: Internal runs the built-in interior-point
// method; Dump writes the program to settings.dump_path and returns a
// NumericalFailure placeholder without solving.
ConicSolution solve_conic(const ConicProgram& p, const SolverSettings& s);
ConicSolution solve_conic_with(ConicBackend& backend, const ConicProgram& p,
                               const SolverSettings& s);

struct Violation {
  std::string what;
  double magnitude;
};
struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Recomputes residuals, cone membership margins, objectives, and the duality
// gap from scratch (independently of the solver) and reports everything that
// exceeds tol. Meant for solutions with status Optimal.
ValidationReport validate_solution(const ConicProgram& p,
                                   const ConicSolution& sol, double tol);

// Text dump in a sparse triplet format (header with the block layout, an
// objective section, then one section per row) for cross-checking against
// external solvers. Format details in the implementation.
void dump_program(const ConicProgram& p, const std::string& path);

}  // namespace qsmbox
