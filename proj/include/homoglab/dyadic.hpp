#pragma once

#include <vector>

#include "homoglab/grid.hpp"

namespace homoglab {

/// The torus [0, L)^d viewed as the cube [-2^N, 2^N]^d with unit length L / 2^{N+1}.
/// Level-n blocks have side 2^{n+1} units; level N is the whole torus.
struct DyadicFrame {
  int top_level = 0;
  double unit = 0.0;

  /// Default N = log2(n) - 1 so that one unit is one cell.
  static DyadicFrame for_grid(const TorusGrid& grid);
  static DyadicFrame for_grid(const TorusGrid& grid, int top_level);
  /// Block side of level n in cells; throws BadLevel unless a whole number of cells.
  int block_cells(const TorusGrid& grid, int level) const;
};

/// P_n u: average of u over each dyadic block of level n.
ScalarField dyadic_project(const ScalarField& u, int level, const DyadicFrame& frame);
ScalarField dyadic_project(const ScalarField& u, int level);

struct MultiscaleDecomposition {
  DyadicFrame frame;
  /// differences[n - 1] = P_{n-1} u - P_n u for n = 1..N.
  std::vector<ScalarField> differences;
  /// u - P_0 u.
  ScalarField residual;
  /// | ||u - P_N u||^2 - sum ||P_{n-1}u - P_n u||^2 - ||u - P_0 u||^2 |
  double l2_identity_gap = 0.0;
  /// ||u - P_N u||^2, the scale for the identity gap.
  double total_sq = 0.0;
  /// sum_n 2^n unit ||P_{n-1}u - P_n u|| + unit^2 ||grad u||
  double multiscale_hminus1_bound = 0.0;
  /// ||P_{n-1}u - P_n u||_L2 per level n = 1..N.
  std::vector<double> level_norms;
};

MultiscaleDecomposition multiscale_decomposition(const ScalarField& u, const DyadicFrame& frame);
MultiscaleDecomposition multiscale_decomposition(const ScalarField& u, int top_level);

}  // namespace homoglab
