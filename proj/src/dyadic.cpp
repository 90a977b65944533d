#include "homoglab/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "homoglab/norms.hpp"
#include "homoglab/reduce.hpp"

namespace homoglab {

namespace {
int log2_exact(int n) {
  int k = 0;
  while ((1 << k) < n) ++k;
  return k;
}
}  // namespace

DyadicFrame DyadicFrame::for_grid(const TorusGrid& grid) { return for_grid(grid, log2_exact(grid.cells()) - 1); }

DyadicFrame DyadicFrame::for_grid(const TorusGrid& grid, int top_level) {
  if (top_level < 1) throw Error(Errc::BadLevel, "top level must be at least 1");
  DyadicFrame f;
  f.top_level = top_level;
  f.unit = grid.length() / std::ldexp(1.0, top_level + 1);
  return f;
}

int DyadicFrame::block_cells(const TorusGrid& grid, int level) const {
  if (level < 0 || level > top_level)
    throw Error(Errc::BadLevel, "level " + std::to_string(level) + " outside [0, " + std::to_string(top_level) + "]");
  // Block side in cells = n * 2^{level - N}.
  const int shift = top_level - level;
  const int n = grid.cells();
  if (shift >= 31 || (n >> shift) << shift != n)
    throw Error(Errc::BadLevel, "level " + std::to_string(level) + " block is not a whole number of cells");
  return n >> shift;
}

ScalarField dyadic_project(const ScalarField& u, int level, const DyadicFrame& frame) {
  const TorusGrid& grid = u.grid();
  const int b = frame.block_cells(grid, level);
  const int d = grid.dim();
  const int n = grid.cells();
  const int blocks = n / b;
  std::size_t block_count = 1;
  for (int a = 0; a < d; ++a) block_count *= static_cast<std::size_t>(blocks);
  std::vector<CompensatedSum> sums(block_count);
  std::vector<double> lo(block_count, INFINITY), hi(block_count, -INFINITY);
  auto block_of = [&](std::size_t c) {
    const auto cell = grid.cell_of(c);
    std::size_t idx = 0;
    for (int a = d - 1; a >= 0; --a) idx = idx * static_cast<std::size_t>(blocks) + static_cast<std::size_t>(cell[a] / b);
    return idx;
  };
  // Cells are visited in index order, so every block sum sees the same sequence.
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const std::size_t k = block_of(c);
    sums[k].add(u[c]);
    lo[k] = std::min(lo[k], u[c]);
    hi[k] = std::max(hi[k], u[c]);
  }
  double per_block = 1.0;
  for (int a = 0; a < d; ++a) per_block *= b;
  std::vector<double> avg(block_count);
  // A constant block keeps its value exactly, which makes P_n idempotent bit for bit.
  for (std::size_t k = 0; k < block_count; ++k) avg[k] = lo[k] == hi[k] ? lo[k] : sums[k].value() / per_block;
  ScalarField out(grid);
  for (std::size_t c = 0; c < grid.size(); ++c) out[c] = avg[block_of(c)];
  return out;
}

ScalarField dyadic_project(const ScalarField& u, int level) {
  return dyadic_project(u, level, DyadicFrame::for_grid(u.grid()));
}

MultiscaleDecomposition multiscale_decomposition(const ScalarField& u, const DyadicFrame& frame) {
  const TorusGrid& grid = u.grid();
  MultiscaleDecomposition out{frame, {}, ScalarField(grid), 0.0, 0.0, 0.0, {}};
  std::vector<ScalarField> proj;
  proj.reserve(frame.top_level + 1);
  for (int level = 0; level <= frame.top_level; ++level) proj.push_back(dyadic_project(u, level, frame));
  out.residual = u - proj[0];
  CompensatedSum parts;
  CompensatedSum bound;
  for (int level = 1; level <= frame.top_level; ++level) {
    ScalarField diff = proj[level - 1] - proj[level];
    const double nrm = l2_norm(diff);
    out.level_norms.push_back(nrm);
    parts.add(nrm * nrm);
    bound.add(std::ldexp(1.0, level) * frame.unit * nrm);
    out.differences.push_back(std::move(diff));
  }
  const double res = l2_norm(out.residual);
  parts.add(res * res);
  const double total = l2_norm(u - proj[frame.top_level]);
  out.total_sq = total * total;
  out.l2_identity_gap = std::fabs(out.total_sq - parts.value());
  bound.add(frame.unit * frame.unit * norm(u, NormKind::H1semi));
  out.multiscale_hminus1_bound = bound.value();
  return out;
}

MultiscaleDecomposition multiscale_decomposition(const ScalarField& u, int top_level) {
  return multiscale_decomposition(u, DyadicFrame::for_grid(u.grid(), top_level));
}

}  // namespace homoglab
