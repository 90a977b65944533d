#include "homoglab/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <map>
#include <mutex>
#include <numbers>

#include "homoglab/reduce.hpp"

namespace homoglab {

namespace {
// The FFTW planner is not thread-safe; plan execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct Spectral::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  explicit Plans(const TorusGrid& grid) {
    std::vector<int> dims(grid.dim());
    for (int a = 0; a < grid.dim(); ++a) dims[a] = grid.cells();
    RealBuffer real(grid.size());
    ComplexBuffer cplx(grid.spectral_size());
    auto* out = reinterpret_cast<fftw_complex*>(cplx.data());
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE picks the same algorithm on every run, which keeps results bit-reproducible.
    r2c = fftw_plan_dft_r2c(grid.dim(), dims.data(), real.data(), out,
                            FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    c2r = fftw_plan_dft_c2r(grid.dim(), dims.data(), out, real.data(),
                            FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    if (r2c == nullptr || c2r == nullptr) throw Error(Errc::InvalidArgument, "FFTW planning failed");
  }
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(r2c);
    fftw_destroy_plan(c2r);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

std::shared_ptr<const Spectral> Spectral::of(const TorusGrid& grid) {
  using Key = std::tuple<int, int, double>;
  static std::mutex cache_mutex;
  static std::map<Key, std::shared_ptr<const Spectral>> cache;
  std::lock_guard lock(cache_mutex);
  const Key key{grid.dim(), grid.cells(), grid.length()};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto fresh = std::make_shared<const Spectral>(grid);
  cache[key] = fresh;
  return fresh;
}

Spectral::Spectral(const TorusGrid& grid) : grid_(grid) {
  {
    // Plans depend only on (d, n); share them between grids of different L.
    static std::mutex plan_mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<Plans>> plan_cache;
    std::lock_guard lock(plan_mutex);
    const auto key = std::make_pair(grid.dim(), grid.cells());
    if (auto it = plan_cache.find(key); it != plan_cache.end()) plans_ = it->second;
    if (!plans_) {
      plans_ = std::make_shared<Plans>(grid);
      plan_cache[key] = plans_;
    }
  }
  const int d = grid.dim();
  const int n = grid.cells();
  const std::size_t m = grid.spectral_size();
  const double base = 2.0 * std::numbers::pi / grid.length();
  xi_.assign(d, std::vector<double>(m, 0.0));
  xi_sq_.assign(m, 0.0);
  k_sq_.assign(m, 0.0);
  weight_.assign(m, 1.0);
  for (std::size_t mode = 0; mode < m; ++mode) {
    double xs = 0.0;
    double ks = 0.0;
    for (int a = 0; a < d; ++a) {
      const int k = wavenumber(mode, a);
      const double x = (2 * k == n) ? 0.0 : base * k;
      xi_[a][mode] = x;
      xs += x * x;
      ks += (base * k) * (base * k);
    }
    xi_sq_[mode] = xs;
    k_sq_[mode] = ks;
    const int k0 = static_cast<int>(mode % static_cast<std::size_t>(n / 2 + 1));
    weight_[mode] = (k0 == 0 || 2 * k0 == n) ? 1.0 : 2.0;
  }
}

Spectral::~Spectral() = default;

int Spectral::wavenumber(std::size_t mode, int axis) const noexcept {
  const int n = grid_.cells();
  const std::size_t half = static_cast<std::size_t>(n / 2 + 1);
  if (axis == 0) return static_cast<int>(mode % half);
  std::size_t rest = mode / half;
  for (int a = 1; a < axis; ++a) rest /= static_cast<std::size_t>(n);
  const int idx = static_cast<int>(rest % static_cast<std::size_t>(n));
  return idx <= n / 2 ? idx : idx - n;
}

void Spectral::forward(const ScalarField& field, Spectrum& out) const {
  require_same_grid(grid_, field.grid(), "Spectral::forward");
  require_same_grid(grid_, out.grid(), "Spectral::forward");
  fftw_execute_dft_r2c(plans_->r2c, const_cast<double*>(field.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
  out *= 1.0 / static_cast<double>(grid_.size());
}

Spectrum Spectral::forward(const ScalarField& field) const {
  Spectrum out(grid_);
  forward(field, out);
  return out;
}

void Spectral::inverse(const Spectrum& spectrum, ScalarField& out) const {
  require_same_grid(grid_, spectrum.grid(), "Spectral::inverse");
  require_same_grid(grid_, out.grid(), "Spectral::inverse");
  ComplexBuffer scratch(spectrum.data(), spectrum.data() + spectrum.size());
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
}

ScalarField Spectral::inverse(const Spectrum& spectrum) const {
  ScalarField out(grid_);
  inverse(spectrum, out);
  return out;
}

void Spectral::differentiate(Spectrum& s, int axis) const {
  const auto& x = xi_[axis];
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = Complex(-x[i] * s[i].imag(), x[i] * s[i].real());
}

Spectrum Spectral::derivative(const Spectrum& s, int axis) const {
  Spectrum out = s;
  differentiate(out, axis);
  return out;
}

void Spectral::differentiate(Spectrum& s, std::span<const int> axes) const {
  std::array<int, 4> sorted{};
  const std::size_t order = axes.size();
  if (order > sorted.size()) throw Error(Errc::InvalidArgument, "derivative order above 4");
  std::copy(axes.begin(), axes.end(), sorted.begin());
  std::sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(order));
  for (std::size_t i = 0; i < s.size(); ++i) {
    double symbol = 1.0;
    for (std::size_t a = 0; a < order; ++a) symbol *= xi_[sorted[a]][i];
    const Complex v = s[i] * symbol;
    // i^order
    switch (order % 4) {
      case 0: s[i] = v; break;
      case 1: s[i] = Complex(-v.imag(), v.real()); break;
      case 2: s[i] = -v; break;
      default: s[i] = Complex(v.imag(), -v.real()); break;
    }
  }
}

Spectrum Spectral::derivative(const Spectrum& s, std::span<const int> axes) const {
  Spectrum out = s;
  differentiate(out, axes);
  return out;
}

ScalarField Spectral::diff(const ScalarField& u, int axis) const {
  Spectrum s = forward(u);
  differentiate(s, axis);
  return inverse(s);
}

VectorField Spectral::gradient(const Spectrum& u) const {
  VectorField g(grid_);
  for (int a = 0; a < grid_.dim(); ++a) inverse(derivative(u, a), g[a]);
  return g;
}

VectorField Spectral::gradient(const ScalarField& u) const { return gradient(forward(u)); }

Spectrum Spectral::divergence_spectrum(const VectorField& g) const {
  Spectrum acc(grid_);
  Spectrum tmp(grid_);
  for (int a = 0; a < grid_.dim(); ++a) {
    forward(g[a], tmp);
    differentiate(tmp, a);
    acc += tmp;
  }
  return acc;
}

ScalarField Spectral::divergence(const VectorField& g) const { return inverse(divergence_spectrum(g)); }

double Spectral::inner(const Spectrum& u, const Spectrum& v) const {
  CompensatedSum acc;
  for (std::size_t i = 0; i < u.size(); ++i)
    acc.add(weight_[i] * (u[i].real() * v[i].real() + u[i].imag() * v[i].imag()));
  return grid_.volume() * acc.value();
}

ScalarField spectral_diff(const ScalarField& u, int axis) {
  if (axis < 0 || axis >= u.grid().dim()) throw Error(Errc::InvalidArgument, "spectral_diff: bad axis");
  return Spectral::of(u.grid())->diff(u, axis);
}

}  // namespace homoglab
