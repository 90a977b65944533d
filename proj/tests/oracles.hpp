#pragma once

// Independent reference computations used by the unit tests.  Nothing here
// calls into the library's spectral or solver code.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "homoglab/grid.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

/// Cyclic Jacobi eigenvalue iteration for a dense symmetric matrix.
/// Returns eigenvalues ascending; columns of `vectors` are the eigenvectors.
inline std::vector<double> jacobi_eigen(Dense a, Dense& vectors) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] < a[y][y]; });
  std::vector<double> ev(n);
  Dense sorted(n, std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c) {
    ev[c] = a[order[c]][order[c]];
    for (std::size_t r = 0; r < n; ++r) sorted[r][c] = vectors[r][order[c]];
  }
  vectors = sorted;
  return ev;
}

/// Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(Dense a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

/// Dense 5/7-point Dirichlet Laplacian on the masked cells, in mask order.
inline Dense masked_laplacian(const homoglab::TorusGrid& grid, const std::vector<std::size_t>& cells) {
  const std::size_t m = cells.size();
  Dense a(m, std::vector<double>(m, 0.0));
  const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
  const int n = grid.cells();
  for (std::size_t r = 0; r < m; ++r) {
    a[r][r] = 2.0 * grid.dim() * inv_h2;
    const auto cell = grid.cell_of(cells[r]);
    for (int ax = 0; ax < grid.dim(); ++ax)
      for (int s : {1, n - 1}) {
        auto nb = cell;
        nb[ax] = (cell[ax] + s) % n;
        const auto idx = grid.index_of(nb);
        const auto it = std::find(cells.begin(), cells.end(), idx);
        if (it != cells.end()) a[r][static_cast<std::size_t>(it - cells.begin())] -= inv_h2;
      }
  }
  return a;
}

/// Full complex DFT coefficients c_k = (1/N) sum_x u(x) exp(-2 pi i k.j/n) by direct summation,
/// with k in (-n/2, n/2]^d listed in lexicographic order.
struct Mode {
  std::array<int, 3> k{};
  std::complex<double> c;
};

inline std::vector<Mode> direct_dft(const homoglab::ScalarField& u) {
  const auto& grid = u.grid();
  const int d = grid.dim();
  const int n = grid.cells();
  std::vector<Mode> modes;
  std::array<int, 3> k{0, 0, 0};
  const int lo = -n / 2 + 1;
  const int kx = n;
  const int ky = d > 1 ? n : 1;
  const int kz = d > 2 ? n : 1;
  for (int a = 0; a < kx; ++a)
    for (int b = 0; b < ky; ++b)
      for (int c = 0; c < kz; ++c) {
        k = {lo + a, d > 1 ? lo + b : 0, d > 2 ? lo + c : 0};
        std::complex<double> acc = 0.0;
        for (std::size_t x = 0; x < grid.size(); ++x) {
          const auto cell = grid.cell_of(x);
          double phase = 0.0;
          for (int ax = 0; ax < d; ++ax) phase += static_cast<double>(k[ax]) * cell[ax];
          acc += u[x] * std::polar(1.0, -2.0 * std::numbers::pi * phase / n);
        }
        modes.push_back({k, acc / static_cast<double>(grid.size())});
      }
  return modes;
}

/// Random band-limited field: random Fourier coefficients for max |k_a| <= kmax, real part taken.
inline homoglab::ScalarField band_limited(const homoglab::TorusGrid& grid, int kmax, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  homoglab::ScalarField u(grid);
  const int d = grid.dim();
  const double L = grid.length();
  for (int a = -kmax; a <= kmax; ++a)
    for (int b = (d > 1 ? -kmax : 0); b <= (d > 1 ? kmax : 0); ++b)
      for (int c = (d > 2 ? -kmax : 0); c <= (d > 2 ? kmax : 0); ++c) {
        const double amp = normal(rng), ph = normal(rng);
        for (std::size_t x = 0; x < grid.size(); ++x) {
          const auto p = grid.center_of(x);
          const double arg = 2.0 * std::numbers::pi / L * (a * p[0] + b * p[1] + c * p[2]);
          u[x] += amp * std::cos(arg + ph);
        }
      }
  return u;
}

/// Mean-zero periodic antiderivative of f - mean(f) on nodes x_m = (m + 1/2) L / M,
/// built from the fourth-order interval rule h/24 (-f_{m-1} + 13 f_m + 13 f_{m+1} - f_{m+2}).
inline std::vector<double> periodic_antiderivative(std::vector<double> f, double length) {
  const std::size_t m = f.size();
  double avg = 0.0;
  for (double v : f) avg += v;
  avg /= static_cast<double>(m);
  for (double& v : f) v -= avg;
  const double h = length / static_cast<double>(m);
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double fm1 = f[(i + m - 1) % m], f0 = f[i], f1 = f[i + 1], f2 = f[(i + 2) % m];
    out[i + 1] = out[i] + h / 24.0 * (-fm1 + 13.0 * f0 + 13.0 * f1 - f2);
  }
  double shift = 0.0;
  for (double v : out) shift += v;
  shift /= static_cast<double>(m);
  for (double& v : out) v -= shift;
  return out;
}

/// Mean of nodal samples of a periodic function (trapezoid rule).
inline double periodic_mean(const std::vector<double>& f) {
  double s = 0.0;
  for (double v : f) s += v;
  return s / static_cast<double>(f.size());
}

/// 1D reference solution of the laminate alpha in {1, 1/2} along e1 (period 1):
/// cell-center values of phi_1 and psi_11 on a grid of n cells.
struct LaminateOracle {
  std::vector<double> phi, psi;
};

inline LaminateOracle laminate_oracle(int n) {
  const int r = 63;  // odd refinement keeps cell centers on quadrature nodes
  const int m = n * r;
  std::vector<double> dphi(m), inva(m);
  for (int i = 0; i < m; ++i) {
    const double x = (i + 0.5) / m;
    const double alpha = x < 0.5 ? 1.0 : 0.5;
    inva[i] = 1.0 / alpha;
  }
  const double ahom = 1.0 / periodic_mean(inva);
  for (int i = 0; i < m; ++i) dphi[i] = ahom * inva[i] - 1.0;
  const auto phi = periodic_antiderivative(dphi, 1.0);
  // alpha psi' + phi alpha = c with c fixed by periodicity
  const double c = periodic_mean(phi) / periodic_mean(inva);
  std::vector<double> dpsi(m);
  for (int i = 0; i < m; ++i) dpsi[i] = c * inva[i] - phi[i];
  const auto psi = periodic_antiderivative(dpsi, 1.0);
  LaminateOracle out;
  for (int i = 0; i < n; ++i) {
    out.phi.push_back(phi[i * r + r / 2]);
    out.psi.push_back(psi[i * r + r / 2]);
  }
  return out;
}

}  // namespace oracle
