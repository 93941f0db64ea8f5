// Incremental assembly of ConicPrograms: blocks and rows are declared in
// natural (matrix-entry) terms and the builder handles packed-coordinate
// indexing, the sqrt(2) off-diagonal convention, inequality slacks, and the
// objective constant that standard form cannot carry.
#pragma once

#include <cstddef>
#include <vector>

#include "qsmbox/conic.hpp"
#include "qsmbox/symmat.hpp"

namespace qsmbox {

struct PsdBlockRef {
  std::size_t block_index = 0;
  std::size_t d = 0;
  std::size_t coord0 = 0;
};

struct BuiltProgram {
  ConicProgram program;
  // Constant added to the conic optimal value to recover the caller's
  // objective (standard form has no constant term).
  double objective_constant = 0.0;
  // Coordinate range of the slacks appended for inequality rows.
  std::size_t slack_coord0 = 0;
  std::size_t slack_count = 0;
};

enum class RowSense { Eq, Le, Ge };

class ModelBuilder {
 public:
  PsdBlockRef add_psd(std::size_t d);
  // Returns the first coordinate of a fresh block of the given size.
  std::size_t add_nonneg(std::size_t count);
  std::size_t add_free(std::size_t count);

  // Packed coordinate of entry (i,j) of a PSD block (order irrelevant).
  std::size_t psd_coord(const PsdBlockRef& b, std::size_t i, std::size_t j) const;

  // Rows are built incrementally; the handle is the row index.
  std::size_t begin_row(double rhs, RowSense sense = RowSense::Eq);
  // Accumulates v onto the coefficient of a raw coordinate.
  void add_coeff(std::size_t row, std::size_t coord, double v);
  // Accumulates gamma onto the coefficient of matrix entry (i,j), meaning the
  // row contains the term gamma * M_ij (the symmetric entry counted once).
  void add_psd_entry(std::size_t row, const PsdBlockRef& b, std::size_t i,
                     std::size_t j, double gamma);

  void obj_coeff(std::size_t coord, double v);
  void obj_psd_entry(const PsdBlockRef& b, std::size_t i, std::size_t j,
                     double gamma);
  // Whole-matrix objective term <M, X> for PSD block b.
  void obj_psd_matrix(const PsdBlockRef& b, const SymMatrix& m);
  void obj_constant(double v);

  std::size_t num_rows() const { return rows_.size(); }

  // Finalizes: appends one NonNeg slack block covering every Le/Ge row (Le
  // becomes lhs + slack = rhs, Ge becomes lhs - slack = rhs) and returns the
  // assembled program. The builder is left empty.
  BuiltProgram take();

 private:
  std::vector<ConeBlock> blocks_;
  std::size_t next_coord_ = 0;
  struct PendingRow {
    SparseRow data;
    RowSense sense;
  };
  std::vector<PendingRow> rows_;
  std::vector<std::pair<std::size_t, double>> obj_;
  double obj_constant_ = 0.0;
};

// Reads the PSD block of a packed solution vector back as a matrix.
SymMatrix extract_psd(const Vec& z, const PsdBlockRef& b);

}  // namespace qsmbox
