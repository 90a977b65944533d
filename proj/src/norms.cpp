#include "homoglab/norms.hpp"

#include <cmath>

#include "homoglab/cellsolve.hpp"
#include "homoglab/reduce.hpp"
#include "homoglab/spectral.hpp"

namespace homoglab {

double mean(const ScalarField& u) { return compensated_sum(u.values()) / static_cast<double>(u.size()); }

ScalarField mean_zero(ScalarField u) {
  const double m = mean(u);
  for (auto& x : u.values()) x -= m;
  return u;
}

double l2_inner(const ScalarField& u, const ScalarField& v) {
  require_same_grid(u.grid(), v.grid(), "l2_inner");
  return u.grid().cell_volume() * compensated_dot(u.values(), v.values());
}

double l2_norm(const ScalarField& u) { return std::sqrt(l2_inner(u, u)); }

double norm(const ScalarField& u, NormKind kind) {
  switch (kind) {
    case NormKind::L2:
      return l2_norm(u);
    case NormKind::H1semi: {
      const auto sp = Spectral::of(u.grid());
      const Spectrum s = sp->forward(u);
      CompensatedSum acc;
      const auto w = sp->weight();
      const auto xs = sp->xi_sq();
      for (std::size_t m = 0; m < s.size(); ++m) acc.add(w[m] * xs[m] * std::norm(s[m]));
      return std::sqrt(u.grid().volume() * acc.value());
    }
    case NormKind::Hminus1Torus: {
      const auto sp = Spectral::of(u.grid());
      const Spectrum s = sp->forward(u);
      CompensatedSum acc;
      const auto w = sp->weight();
      const auto ks = sp->k_sq();
      for (std::size_t m = 1; m < s.size(); ++m) acc.add(w[m] * std::norm(s[m]) / ks[m]);
      return std::sqrt(u.grid().volume() * acc.value());
    }
  }
  return 0.0;
}

std::array<double, 3> torus_center(const TorusGrid& grid) {
  std::array<double, 3> c{0.0, 0.0, 0.0};
  for (int a = 0; a < grid.dim(); ++a) c[a] = 0.5 * grid.length();
  return c;
}

BallMask ball_mask(const TorusGrid& grid, const std::array<double, 3>& center, double radius) {
  if (!(radius > 0.0)) throw Error(Errc::InvalidArgument, "ball radius must be positive");
  const double margin = 2.0 * grid.spacing();
  for (int a = 0; a < grid.dim(); ++a) {
    if (center[a] - radius < margin || center[a] + radius > grid.length() - margin)
      throw Error(Errc::InvalidArgument, "ball does not fit inside the torus with a 2h margin");
  }
  BallMask ball{grid, center, radius, {}, std::vector<std::uint8_t>(grid.size(), 0)};
  const double r2 = radius * radius;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto x = grid.center_of(c);
    double dist2 = 0.0;
    for (int a = 0; a < grid.dim(); ++a) dist2 += (x[a] - center[a]) * (x[a] - center[a]);
    if (dist2 <= r2) {
      ball.inside[c] = 1;
      ball.cells.push_back(c);
    }
  }
  if (ball.cells.empty()) throw Error(Errc::MaskEmpty, "no cell center lies in the ball");
  return ball;
}

double l2_ball(const ScalarField& u, const BallMask& ball) {
  require_same_grid(u.grid(), ball.grid, "l2_ball");
  CompensatedSum acc;
  for (std::size_t c : ball.cells) acc.add(u[c] * u[c]);
  return std::sqrt(u.grid().cell_volume() * acc.value());
}

double mean_ball(const ScalarField& u, const BallMask& ball) {
  require_same_grid(u.grid(), ball.grid, "mean_ball");
  CompensatedSum acc;
  for (std::size_t c : ball.cells) acc.add(u[c]);
  return acc.value() / static_cast<double>(ball.count());
}

double hminus1_ball(const ScalarField& u, const BallMask& ball, double tol, int max_iter) {
  require_same_grid(u.grid(), ball.grid, "hminus1_ball");
  SolveSpec spec;
  spec.rel_tol = tol;
  spec.max_iter = max_iter;
  const ScalarField w = dirichlet_mask_cg(ball.inside, u, spec);
  // Edge energy h^d sum |w_a - w_b|^2 / h^2 over edges touching the mask.
  const TorusGrid& grid = u.grid();
  const int d = grid.dim();
  const int n = grid.cells();
  CompensatedSum acc;
  for (std::size_t c : ball.cells) {
    const auto cell = grid.cell_of(c);
    for (int a = 0; a < d; ++a)
      for (int s = 0; s < 2; ++s) {
        auto nbr = cell;
        nbr[a] = (cell[a] + (s ? 1 : n - 1)) % n;
        const std::size_t o = grid.index_of(nbr);
        const double diff = w[c] - w[o];
        // Interior edges are met twice; edges to the exterior once.
        acc.add((ball.inside[o] ? 0.5 : 1.0) * diff * diff);
      }
  }
  return std::sqrt(grid.cell_volume() / (grid.spacing() * grid.spacing()) * acc.value());
}

double hminus1_ball(const ScalarField& u, const std::array<double, 3>& center, double radius, double tol,
                    int max_iter) {
  return hminus1_ball(u, ball_mask(u.grid(), center, radius), tol, max_iter);
}

}  // namespace homoglab
