#include "qsmbox/model.hpp"

#include <algorithm>
#include <cmath>

namespace qsmbox {

PsdBlockRef ModelBuilder::add_psd(std::size_t d) {
  PsdBlockRef ref{blocks_.size(), d, next_coord_};
  blocks_.push_back({BlockKind::Psd, d});
  next_coord_ += packed_size(d);
  return ref;
}

std::size_t ModelBuilder::add_nonneg(std::size_t count) {
  blocks_.push_back({BlockKind::NonNeg, count});
  const std::size_t c0 = next_coord_;
  next_coord_ += count;
  return c0;
}

std::size_t ModelBuilder::add_free(std::size_t count) {
  blocks_.push_back({BlockKind::Free, count});
  const std::size_t c0 = next_coord_;
  next_coord_ += count;
  return c0;
}

std::size_t ModelBuilder::psd_coord(const PsdBlockRef& b, std::size_t i,
                                    std::size_t j) const {
  if (i >= b.d || j >= b.d) throw DimensionError("psd_coord: entry out of range");
  if (i < j) std::swap(i, j);
  // Column-major lower triangle: columns 0..j-1 hold d, d-1, ... entries.
  return b.coord0 + j * b.d - j * (j - 1) / 2 + (i - j);
}

std::size_t ModelBuilder::begin_row(double rhs, RowSense sense) {
  rows_.push_back({SparseRow{{}, {}, rhs}, sense});
  return rows_.size() - 1;
}

void ModelBuilder::add_coeff(std::size_t row, std::size_t coord, double v) {
  SparseRow& r = rows_.at(row).data;
  for (std::size_t k = 0; k < r.idx.size(); ++k)
    if (r.idx[k] == coord) {
      r.val[k] += v;
      return;
    }
  r.idx.push_back(coord);
  r.val.push_back(v);
}

void ModelBuilder::add_psd_entry(std::size_t row, const PsdBlockRef& b,
                                 std::size_t i, std::size_t j, double gamma) {
  // Packed off-diagonal coordinates store sqrt(2)*M_ij, so a coefficient of
  // gamma on the entry value M_ij becomes gamma/sqrt(2) on the coordinate.
  const double coeff = (i == j) ? gamma : gamma / std::sqrt(2.0);
  add_coeff(row, psd_coord(b, i, j), coeff);
}

void ModelBuilder::obj_coeff(std::size_t coord, double v) {
  obj_.emplace_back(coord, v);
}

void ModelBuilder::obj_psd_entry(const PsdBlockRef& b, std::size_t i,
                                 std::size_t j, double gamma) {
  const double coeff = (i == j) ? gamma : gamma / std::sqrt(2.0);
  obj_.emplace_back(psd_coord(b, i, j), coeff);
}

void ModelBuilder::obj_psd_matrix(const PsdBlockRef& b, const SymMatrix& m) {
  if (m.n() != b.d) throw DimensionError("obj_psd_matrix: order mismatch");
  // <M, X> = sum_ii M_ii X_ii + sum_{i<j} 2 M_ij X_ij.
  for (std::size_t i = 0; i < b.d; ++i)
    for (std::size_t j = i; j < b.d; ++j) {
      const double g = (i == j) ? m(i, i) : 2.0 * m(i, j);
      if (g != 0.0) obj_psd_entry(b, i, j, g);
    }
}

void ModelBuilder::obj_constant(double v) { obj_constant_ += v; }

BuiltProgram ModelBuilder::take() {
  std::size_t num_slacks = 0;
  for (const PendingRow& r : rows_)
    if (r.sense != RowSense::Eq) ++num_slacks;

  BuiltProgram out;
  out.objective_constant = obj_constant_;
  out.slack_coord0 = next_coord_;
  out.slack_count = num_slacks;

  ConicProgram& p = out.program;
  p.blocks = std::move(blocks_);
  if (num_slacks > 0) p.blocks.push_back({BlockKind::NonNeg, num_slacks});

  const std::size_t total = next_coord_ + num_slacks;
  p.objective.assign(total, 0.0);
  for (const auto& [coord, v] : obj_) p.objective.at(coord) += v;

  p.rows.reserve(rows_.size());
  std::size_t slack = out.slack_coord0;
  for (PendingRow& r : rows_) {
    if (r.sense != RowSense::Eq) {
      r.data.idx.push_back(slack++);
      r.data.val.push_back(r.sense == RowSense::Le ? 1.0 : -1.0);
    }
    p.rows.push_back(std::move(r.data));
  }

  blocks_.clear();
  rows_.clear();
  obj_.clear();
  next_coord_ = 0;
  obj_constant_ = 0.0;
  p.check_well_formed();
  return out;
}

SymMatrix extract_psd(const Vec& z, const PsdBlockRef& b) {
  const std::size_t len = packed_size(b.d);
  if (b.coord0 + len > z.size()) throw DimensionError("extract_psd: out of range");
  Vec packed(z.begin() + b.coord0, z.begin() + b.coord0 + len);
  return unpack_scaled(b.d, packed);
}

}  // namespace qsmbox
