#include "homoglab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "homoglab/reduce.hpp"
#include "homoglab/spectral.hpp"

namespace homoglab {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string to_string(CovarianceKind kind) {
  return kind == CovarianceKind::GaussianBump ? "gaussian_bump" : "exponential";
}

std::string to_string(DeterministicKind kind) {
  switch (kind) {
    case DeterministicKind::Constant: return "constant";
    case DeterministicKind::Laminate: return "laminate";
    case DeterministicKind::Checkerboard: return "checkerboard";
    case DeterministicKind::SkewProfile: return "skew_profile";
    case DeterministicKind::TrigPolynomial: return "trig_polynomial";
  }
  return "unknown";
}

void CovarianceSpec::validate(const TorusGrid& grid) const {
  if (!(variance > 0.0) || !std::isfinite(variance)) throw Error(Errc::Validation, "covariance variance must be positive");
  if (!(ell > 2.0 * grid.spacing() && ell < grid.length() / 4.0))
    throw Error(Errc::Validation, "correlation length must lie in (2h, L/4)");
}

double CovarianceSpec::kernel(double r) const {
  if (kind == CovarianceKind::GaussianBump) return variance * std::exp(-r * r / (2.0 * ell * ell));
  return variance * std::exp(-r / ell);
}

double CovarianceSpec::density(double xi_sq, int d) const {
  if (kind == CovarianceKind::GaussianBump)
    return variance * std::pow(2.0 * kPi * ell * ell, 0.5 * d) * std::exp(-0.5 * ell * ell * xi_sq);
  const double cd = std::pow(2.0, d) * std::pow(kPi, 0.5 * (d - 1)) * std::tgamma(0.5 * (d + 1));
  return variance * cd * std::pow(ell, d) * std::pow(1.0 + ell * ell * xi_sq, -0.5 * (d + 1));
}

ScalarField sample_gaussian_field(const TorusGrid& grid, const CovarianceSpec& cov, const SeedKey& key) {
  cov.validate(grid);
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(key.master), hi(key.master), lo(key.realization), hi(key.realization),
                    lo(key.field),  hi(key.field),  0x48474631u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  ScalarField noise(grid);
  for (auto& x : noise.values()) x = normal(rng);

  const auto sp = Spectral::of(grid);
  Spectrum s = sp->forward(noise);
  const auto ks = sp->k_sq();
  const double scale = static_cast<double>(grid.size()) / grid.volume();
  CompensatedSum total, negative;
  double peak = 0.0;
  std::vector<double> amp(s.size());
  for (std::size_t m = 0; m < s.size(); ++m) {
    const double dens = cov.density(ks[m], grid.dim());
    peak = std::max(peak, std::fabs(dens));
    total.add(std::fabs(dens));
    if (dens < 0.0) negative.add(-dens);
    amp[m] = std::sqrt(std::max(0.0, dens) * scale);
  }
  if (negative.value() > 1e-6 * total.value())
    throw Error(Errc::NegativeSpectrum, "periodized spectral density has negative mass fraction " +
                                            std::to_string(negative.value() / total.value()));
  for (std::size_t m = 0; m < s.size(); ++m) s[m] *= amp[m];
  return sp->inverse(s);
}

std::vector<ScalarField> sample_gaussian_fields(const TorusGrid& grid, const CovarianceSpec& cov,
                                                std::uint64_t master, std::uint64_t realization, int m) {
  std::vector<ScalarField> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i)
    out.push_back(sample_gaussian_field(grid, cov, {master, realization, static_cast<std::uint64_t>(i)}));
  return out;
}

void LipschitzMapSpec::validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw Error(Errc::Validation, "lambda must lie in (0, 1]");
  if (!symmetric) {
    if (!(skew_amplitude >= 0.0 && skew_amplitude <= 0.5 * (1.0 - lambda) + 1e-15))
      throw Error(Errc::Validation, "skew_amplitude must lie in [0, (1 - lambda)/2]");
    if (!(skew_correlation >= 0.0 && skew_correlation <= 1.0))
      throw Error(Errc::Validation, "skew_correlation must lie in [0, 1]");
    if (!std::isfinite(skew_shift)) throw Error(Errc::Validation, "skew_shift must be finite");
  }
}

double LipschitzMapSpec::squash(double t) { return 0.5 * (1.0 + std::tanh(t)); }

SmallMatrix LipschitzMapSpec::apply(int d, double g1, double g2) const {
  if (symmetric) return SmallMatrix::diagonal(d, lambda + (1.0 - lambda) * squash(g1));
  SmallMatrix m = SmallMatrix::diagonal(d, lambda + (1.0 - lambda - skew_amplitude) * squash(g1));
  if (d >= 2) {
    const double b = skew_amplitude * squash(g2);
    m(0, 1) += b;
    m(1, 0) -= b;
  }
  return m;
}

ScalarField correlated_skew_input(const ScalarField& g1, const ScalarField& g2, double rho, int shift_cells) {
  const TorusGrid& grid = g1.grid();
  require_same_grid(grid, g2.grid(), "correlated_skew_input");
  const int n = grid.cells();
  const int shift = ((shift_cells % n) + n) % n;
  const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  ScalarField out(grid);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    auto cell = grid.cell_of(c);
    cell[0] = (cell[0] - shift + n) % n;
    out[c] = rho * g1[grid.index_of(cell)] + mix * g2[c];
  }
  return out;
}

CoefficientField build_coefficient_field(const std::vector<ScalarField>& gfields, const LipschitzMapSpec& map) {
  map.validate();
  if (static_cast<int>(gfields.size()) != map.arity())
    throw Error(Errc::InvalidArgument, "map arity " + std::to_string(map.arity()) + " but " +
                                           std::to_string(gfields.size()) + " Gaussian fields given");
  const TorusGrid& grid = gfields.front().grid();
  for (const auto& g : gfields) require_same_grid(grid, g.grid(), "build_coefficient_field");
  CoefficientField a(grid);
  a.lambda = map.lambda;
  a.upper = 1.0;
  a.symmetric = map.symmetric || map.skew_amplitude == 0.0 || grid.dim() == 1;
  const int d = grid.dim();
  for (std::size_t c = 0; c < grid.size(); ++c) {
    SmallMatrix m = map.apply(d, gfields[0][c], map.symmetric ? 0.0 : gfields[1][c]);
    const double nrm = operator_norm(m);
    if (nrm > 1.0 + 1e-10) {
      for (auto& v : m.v) v /= nrm;
      ++a.rescale_events;
    }
    a.set(c, m);
  }
  return a;
}

CoefficientField sample_coefficient_field(const TorusGrid& grid, const CovarianceSpec& cov,
                                          const LipschitzMapSpec& map, std::uint64_t master,
                                          std::uint64_t realization) {
  map.validate();
  std::vector<ScalarField> g = sample_gaussian_fields(grid, cov, master, realization, map.arity());
  if (!map.symmetric) {
    const int shift = static_cast<int>(std::lround(map.skew_shift * cov.ell / grid.spacing()));
    g[1] = correlated_skew_input(g[0], g[1], map.skew_correlation, shift);
  }
  CoefficientField a = build_coefficient_field(g, map);
  a.eps_scale = cov.ell;
  std::ostringstream os;
  os.precision(17);
  os << "ensemble " << to_string(cov.kind) << " ell=" << cov.ell << " variance=" << cov.variance
     << " lambda=" << map.lambda << " symmetric=" << (map.symmetric ? 1 : 0);
  if (!map.symmetric)
    os << " skew_amplitude=" << map.skew_amplitude << " skew_correlation=" << map.skew_correlation
       << " skew_shift=" << map.skew_shift;
  os << " seed=" << master << " realization=" << realization;
  a.provenance = os.str();
  return a;
}

namespace {

double checked_period(const TorusGrid& grid, double period) {
  const double p = period > 0.0 ? period : grid.length();
  const double ratio = grid.length() / p;
  if (!(p > 0.0) || std::fabs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
    throw Error(Errc::BadPeriod, "period must divide L");
  // Half periods must cover whole cells so that phases are exact.
  const double half_cells = 0.5 * p / grid.spacing();
  if (std::fabs(half_cells - std::round(half_cells)) > 1e-9 || std::round(half_cells) < 1.0)
    throw Error(Errc::BadPeriod, "half period must be a whole number of cells");
  return p;
}

int phase_of(double x, double period) {
  // Cell centers sit strictly inside half periods, so the floor is unambiguous.
  return static_cast<int>(std::floor(2.0 * x / period)) & 1;
}

void finish_bounds(CoefficientField& a) {
  double lo = INFINITY, hi = 0.0;
  for (std::size_t c = 0; c < a.grid().size(); ++c) {
    const SmallMatrix m = a.at(c);
    lo = std::min(lo, min_symmetric_eigenvalue(m));
    hi = std::max(hi, operator_norm(m));
  }
  a.lambda = std::min(1.0, lo);
  a.upper = std::max(1.0, hi);
}

}  // namespace

CoefficientField deterministic_field(const TorusGrid& grid, const DeterministicSpec& spec) {
  const int d = grid.dim();
  CoefficientField a(grid);
  a.symmetric = true;
  std::ostringstream os;
  os.precision(17);
  os << "deterministic " << to_string(spec.kind);
  switch (spec.kind) {
    case DeterministicKind::Constant: {
      SmallMatrix m(d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = spec.matrix(i, j);
      if (!(min_symmetric_eigenvalue(m) > 0.0)) throw Error(Errc::Validation, "constant matrix is not elliptic");
      for (std::size_t c = 0; c < grid.size(); ++c) a.set(c, m);
      a.symmetric = m == m.transpose();
      a.eps_scale = grid.length();
      os << " matrix=" << m.to_string();
      break;
    }
    case DeterministicKind::Laminate: {
      if (spec.axis < 0 || spec.axis >= d) throw Error(Errc::Validation, "laminate axis out of range");
      if (!(spec.value1 > 0.0 && spec.value2 > 0.0)) throw Error(Errc::Validation, "laminate phases must be positive");
      const double p = checked_period(grid, spec.period);
      for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto x = grid.center_of(c);
        SmallMatrix m = SmallMatrix::identity(d);
        m(spec.axis, spec.axis) = phase_of(x[spec.axis], p) == 0 ? spec.value1 : spec.value2;
        a.set(c, m);
      }
      a.eps_scale = p;
      os << " axis=" << spec.axis << " alpha1=" << spec.value1 << " alpha2=" << spec.value2 << " period=" << p;
      break;
    }
    case DeterministicKind::Checkerboard: {
      if (!(spec.value1 > 0.0 && spec.value2 > 0.0)) throw Error(Errc::Validation, "checkerboard phases must be positive");
      const double p = checked_period(grid, spec.period);
      for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto x = grid.center_of(c);
        int parity = 0;
        for (int ax = 0; ax < d; ++ax) parity += phase_of(x[ax], p);
        a.set(c, SmallMatrix::diagonal(d, parity % 2 == 0 ? spec.value1 : spec.value2));
      }
      a.eps_scale = p;
      os << " a1=" << spec.value1 << " a2=" << spec.value2 << " period=" << p;
      break;
    }
    case DeterministicKind::SkewProfile: {
      if (d < 2) throw Error(Errc::Validation, "skew profile needs d >= 2");
      const double p = checked_period(grid, spec.period);
      for (std::size_t c = 0; c < grid.size(); ++c) {
        const double t = 2.0 * kPi * grid.center_of(c)[0] / p;
        SmallMatrix m = SmallMatrix::diagonal(d, spec.alpha_mean + spec.alpha_amp * std::cos(t));
        const double b = spec.beta_mean + spec.beta_amp * std::cos(t + 1.0);
        m(0, 1) = b;
        m(1, 0) = -b;
        a.set(c, m);
      }
      a.symmetric = spec.beta_mean == 0.0 && spec.beta_amp == 0.0;
      a.eps_scale = p;
      os << " alpha=" << spec.alpha_mean << "+" << spec.alpha_amp << "cos beta=" << spec.beta_mean << "+"
         << spec.beta_amp << "cos(.+1) period=" << p;
      break;
    }
    case DeterministicKind::TrigPolynomial: {
      if (d < 2) throw Error(Errc::Validation, "trig polynomial field needs d >= 2");
      const double p = checked_period(grid, spec.period);
      const double k = 2.0 * kPi / p;
      for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto x = grid.center_of(c);
        SmallMatrix m = SmallMatrix::identity(d);
        m(0, 0) = 0.6 + 0.2 * std::cos(k * x[0]) + 0.1 * std::sin(k * x[1]);
        m(1, 1) = 0.6 + 0.2 * std::sin(k * (x[0] + x[1]));
        m(0, 1) = m(1, 0) = 0.1 * std::cos(k * (x[0] - x[1]));
        if (d == 3) m(2, 2) = 0.6 + 0.2 * std::cos(k * x[2]);
        a.set(c, m);
      }
      a.eps_scale = p;
      os << " period=" << p;
      break;
    }
  }
  finish_bounds(a);
  a.provenance = os.str();
  return a;
}

EllipticityReport validate_ellipticity(const CoefficientField& a) {
  EllipticityReport r;
  r.min_eigenvalue = INFINITY;
  for (std::size_t c = 0; c < a.grid().size(); ++c) {
    const SmallMatrix m = a.at(c);
    const double ev = min_symmetric_eigenvalue(m);
    const double nrm = operator_norm(m);
    r.min_eigenvalue = std::min(r.min_eigenvalue, ev);
    r.max_norm = std::max(r.max_norm, nrm);
    r.max_asymmetry = std::max(r.max_asymmetry, m.max_abs_diff(m.transpose()));
    if (ev < a.lambda - 1e-10 || nrm > a.upper + 1e-10) ++r.violations;
  }
  return r;
}

CoefficientField mollify(const CoefficientField& a, double width) {
  if (!(width > 0.0)) throw Error(Errc::InvalidArgument, "mollifier width must be positive");
  const TorusGrid& grid = a.grid();
  const int n = grid.cells();
  const int radius = std::min(n / 2 - 1, static_cast<int>(std::ceil(3.0 * width / grid.spacing())));
  std::vector<double> w(2 * radius + 1);
  double total = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const double x = j * grid.spacing() / width;
    w[j + radius] = std::exp(-0.5 * x * x);
    total += w[j + radius];
  }
  for (double& v : w) v /= total;
  CoefficientField out = a;
  ScalarField tmp(grid);
  for (auto& comp : out.a.comp) {
    for (int ax = 0; ax < grid.dim(); ++ax) {
      for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto cell = grid.cell_of(c);
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) {
          auto nb = cell;
          nb[ax] = (cell[ax] + j + n) % n;
          acc += w[j + radius] * comp[grid.index_of(nb)];
        }
        tmp[c] = acc;
      }
      comp = tmp;
    }
  }
  out.filtered = true;
  out.provenance += " mollified width=" + std::to_string(width);
  return out;
}

}  // namespace homoglab
