#pragma once

#include <memory>
#include <span>

#include "homoglab/grid.hpp"

namespace homoglab {

/// FFT plans and per-mode symbol tables for one grid.  Instances are immutable
/// and shared read-only; obtain them through `Spectral::of`.
///
/// Derivatives use the symbol i*xi with xi_a = 2*pi*k_a/L, except that the
/// Nyquist index k_a = n/2 has xi_a = 0.  Modes with xi = 0 (the mean and the
/// pure-Nyquist corners) form the null space of every gradient; all potentials
/// and inverse operators are zero there.
class Spectral {
 public:
  static std::shared_ptr<const Spectral> of(const TorusGrid& grid);

  explicit Spectral(const TorusGrid& grid);
  ~Spectral();
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  const TorusGrid& grid() const noexcept { return grid_; }

  Spectrum forward(const ScalarField& field) const;
  void forward(const ScalarField& field, Spectrum& out) const;
  ScalarField inverse(const Spectrum& spectrum) const;
  void inverse(const Spectrum& spectrum, ScalarField& out) const;

  /// Nyquist-zeroed derivative symbol for one axis, per stored mode.
  std::span<const double> xi(int axis) const { return xi_[axis]; }
  /// |xi|^2 with Nyquist-zeroed components.
  std::span<const double> xi_sq() const { return xi_sq_; }
  /// True |2 pi k / L|^2 (Nyquist included).
  std::span<const double> k_sq() const { return k_sq_; }
  /// Hermitian multiplicity of each stored mode (1 or 2).
  std::span<const double> weight() const { return weight_; }
  /// Integer wave number of a stored mode along an axis, in (-n/2, n/2].
  int wavenumber(std::size_t mode, int axis) const noexcept;

  /// Multiply by i*xi_axis in place.
  void differentiate(Spectrum& s, int axis) const;
  Spectrum derivative(const Spectrum& s, int axis) const;
  /// Multiply by the symbol prod_a (i xi_{axes[a]}).  The real factors are
  /// multiplied in sorted axis order, so any permutation of `axes` gives the
  /// same bits.
  void differentiate(Spectrum& s, std::span<const int> axes) const;
  Spectrum derivative(const Spectrum& s, std::span<const int> axes) const;

  ScalarField diff(const ScalarField& u, int axis) const;
  VectorField gradient(const ScalarField& u) const;
  VectorField gradient(const Spectrum& u) const;
  ScalarField divergence(const VectorField& g) const;
  /// Spectrum of div g.
  Spectrum divergence_spectrum(const VectorField& g) const;

  /// Integral over the torus of u * v for real fields given by their spectra.
  double inner(const Spectrum& u, const Spectrum& v) const;
  /// Integral of |u|^2 from the spectrum.
  double norm_sq(const Spectrum& u) const { return inner(u, u); }

 private:
  struct Plans;
  TorusGrid grid_;
  std::shared_ptr<Plans> plans_;
  std::vector<std::vector<double>> xi_;
  std::vector<double> xi_sq_;
  std::vector<double> k_sq_;
  std::vector<double> weight_;
};

/// Exact Fourier-collocation derivative along one axis.
ScalarField spectral_diff(const ScalarField& u, int axis);

}  // namespace homoglab
