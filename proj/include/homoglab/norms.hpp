#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "homoglab/grid.hpp"

namespace homoglab {

enum class NormKind { L2, H1semi, Hminus1Torus };

/// Cell average.
double mean(const ScalarField& u);
/// u minus its cell average.
ScalarField mean_zero(ScalarField u);

/// L2: (h^d sum u^2)^{1/2}.  H1semi: ||grad u||_L2 with spectral derivatives.
/// Hminus1Torus: (L^d sum_{k != 0} |u_k|^2 / |2 pi k / L|^2)^{1/2} of the mean-zero part.
double norm(const ScalarField& u, NormKind kind);
double l2_norm(const ScalarField& u);
double l2_inner(const ScalarField& u, const ScalarField& v);

/// Cells whose centers lie in the closed ball |x - center| <= R.  Distances are
/// measured without wraparound, so the ball must fit inside the torus.
struct BallMask {
  TorusGrid grid;
  std::array<double, 3> center{};
  double radius = 0.0;
  std::vector<std::size_t> cells;   // sorted linear indices
  std::vector<std::uint8_t> inside;  // per cell, 1 if in the ball

  std::size_t count() const noexcept { return cells.size(); }
  double volume() const noexcept { return static_cast<double>(cells.size()) * grid.cell_volume(); }
};

/// Ball mask; throws InvalidArgument unless R + 2h <= L/2 measured from the center
/// to every torus face, and MaskEmpty if no center lies in the ball.
BallMask ball_mask(const TorusGrid& grid, const std::array<double, 3>& center, double radius);
/// Center of the torus, (L/2, ..., L/2).
std::array<double, 3> torus_center(const TorusGrid& grid);

double l2_ball(const ScalarField& u, const BallMask& ball);
double mean_ball(const ScalarField& u, const BallMask& ball);

/// ||grad w||_{L2(B)} with -Lap_h w = u on the ball mask and w = 0 outside, solved by CG.
/// This is the discrete H^{-1}(B) norm of u.
double hminus1_ball(const ScalarField& u, const BallMask& ball, double tol = 1e-10, int max_iter = 20000);
double hminus1_ball(const ScalarField& u, const std::array<double, 3>& center, double radius,
                    double tol = 1e-10, int max_iter = 20000);

}  // namespace homoglab
