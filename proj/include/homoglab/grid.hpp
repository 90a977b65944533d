#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <vector>

#include "homoglab/error.hpp"

namespace homoglab {

/// 64-byte aligned storage so FFTW's SIMD kernels apply to every buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t count) {
    return static_cast<T*>(::operator new(count * sizeof(T), alignment));
  }
  void deallocate(T* ptr, std::size_t) noexcept { ::operator delete(ptr, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Complex = std::complex<double>;
using RealBuffer = std::vector<double, AlignedAllocator<double>>;
using ComplexBuffer = std::vector<Complex, AlignedAllocator<Complex>>;

bool is_power_of_two(int value) noexcept;

/// Periodic cubic lattice [0, L)^d with n cells per side; cell centers at (i + 1/2) h.
/// Linear index runs with axis 0 fastest.
class TorusGrid {
 public:
  TorusGrid(int dim, int cells, double length);

  int dim() const noexcept { return dim_; }
  int cells() const noexcept { return cells_; }
  double length() const noexcept { return length_; }
  double spacing() const noexcept { return spacing_; }
  double cell_volume() const noexcept { return cell_volume_; }
  double volume() const noexcept { return std::pow(length_, dim_); }

  std::size_t size() const noexcept { return size_; }
  /// Number of stored modes in the real-to-complex half spectrum (axis 0 halved).
  std::size_t spectral_size() const noexcept { return spectral_size_; }

  std::array<int, 3> cell_of(std::size_t index) const noexcept;
  std::size_t index_of(const std::array<int, 3>& cell) const noexcept;
  double center(int i) const noexcept { return (i + 0.5) * spacing_; }
  std::array<double, 3> center_of(std::size_t index) const noexcept;

  bool operator==(const TorusGrid& other) const noexcept {
    return dim_ == other.dim_ && cells_ == other.cells_ && length_ == other.length_;
  }

 private:
  int dim_;
  int cells_;
  double length_;
  double spacing_;
  double cell_volume_;
  std::size_t size_;
  std::size_t spectral_size_;
};

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* where);

/// Real scalar field, one double per cell.
class ScalarField {
 public:
  explicit ScalarField(const TorusGrid& grid, double value = 0.0)
      : grid_(grid), values_(grid.size(), value) {}
  ScalarField(const TorusGrid& grid, RealBuffer values);

  const TorusGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  ScalarField& operator+=(const ScalarField& other);
  ScalarField& operator-=(const ScalarField& other);
  ScalarField& operator*=(double factor) noexcept;
  /// this += factor * other
  ScalarField& add_scaled(double factor, const ScalarField& other);
  /// this += factor * x * y (pointwise)
  ScalarField& add_product(double factor, const ScalarField& x, const ScalarField& y);

  void fill(double value) noexcept;
  bool all_finite() const noexcept;

 private:
  TorusGrid grid_;
  RealBuffer values_;
};

ScalarField operator+(ScalarField lhs, const ScalarField& rhs);
ScalarField operator-(ScalarField lhs, const ScalarField& rhs);
ScalarField operator*(double factor, ScalarField field);

/// Half-spectrum of a real field, normalized so that u(x) = sum_k u_k exp(i k.x).
class Spectrum {
 public:
  explicit Spectrum(const TorusGrid& grid) : grid_(grid), modes_(grid.spectral_size()) {}

  const TorusGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return modes_.size(); }
  Complex* data() noexcept { return modes_.data(); }
  const Complex* data() const noexcept { return modes_.data(); }
  Complex& operator[](std::size_t i) noexcept { return modes_[i]; }
  const Complex& operator[](std::size_t i) const noexcept { return modes_[i]; }

  Spectrum& operator+=(const Spectrum& other);
  Spectrum& operator-=(const Spectrum& other);
  Spectrum& operator*=(double factor) noexcept;
  Spectrum& add_scaled(double factor, const Spectrum& other);
  void fill(Complex value) noexcept;

 private:
  TorusGrid grid_;
  ComplexBuffer modes_;
};

/// Vector field with one scalar component per axis.
struct VectorField {
  std::vector<ScalarField> comp;

  explicit VectorField(const TorusGrid& grid) : comp(grid.dim(), ScalarField(grid)) {}
  ScalarField& operator[](int i) { return comp[i]; }
  const ScalarField& operator[](int i) const { return comp[i]; }
  int dim() const noexcept { return static_cast<int>(comp.size()); }
};

/// d x d matrix field, row-major components.
struct MatrixField {
  int d;
  std::vector<ScalarField> comp;

  explicit MatrixField(const TorusGrid& grid)
      : d(grid.dim()), comp(grid.dim() * grid.dim(), ScalarField(grid)) {}
  ScalarField& operator()(int i, int j) { return comp[i * d + j]; }
  const ScalarField& operator()(int i, int j) const { return comp[i * d + j]; }
  const TorusGrid& grid() const { return comp.front().grid(); }
};

/// Rank-3 field skew in its last two indices: T_ijk = -T_ikj; only j < k is stored.
class SkewField3 {
 public:
  explicit SkewField3(const TorusGrid& grid);

  int dim() const noexcept { return d_; }
  /// Stored component for (i, j, k) with j < k.
  ScalarField& stored(int i, int j, int k) { return comp_[slot(i, j, k)]; }
  const ScalarField& stored(int i, int j, int k) const { return comp_[slot(i, j, k)]; }
  /// Value T_ijk at a cell, with the sign and zero diagonal handled structurally.
  double at(int i, int j, int k, std::size_t cell) const;
  /// Sign s and stored slot for (i, j, k); s = 0 on the diagonal j == k.
  int sign(int j, int k) const noexcept { return j < k ? 1 : (j > k ? -1 : 0); }
  std::size_t stored_count() const noexcept { return comp_.size(); }
  const std::vector<ScalarField>& components() const noexcept { return comp_; }

 private:
  std::size_t slot(int i, int j, int k) const noexcept;
  int d_;
  int pairs_;
  std::vector<ScalarField> comp_;
};

/// Rank-4 field skew in its last two indices: T_ijkl = -T_ijlk; only k < l is stored.
class SkewField4 {
 public:
  explicit SkewField4(const TorusGrid& grid);

  int dim() const noexcept { return d_; }
  ScalarField& stored(int i, int j, int k, int l) { return comp_[slot(i, j, k, l)]; }
  const ScalarField& stored(int i, int j, int k, int l) const { return comp_[slot(i, j, k, l)]; }
  double at(int i, int j, int k, int l, std::size_t cell) const;
  std::size_t stored_count() const noexcept { return comp_.size(); }
  const std::vector<ScalarField>& components() const noexcept { return comp_; }

 private:
  std::size_t slot(int i, int j, int k, int l) const noexcept;
  int d_;
  int pairs_;
  std::vector<ScalarField> comp_;
};

/// Index of the unordered pair j < k among d(d-1)/2 pairs.
int skew_pair_index(int d, int j, int k) noexcept;

/// Totally symmetric rank-3 field; one stored component per multiset {i, j, k}.
class SymField3 {
 public:
  explicit SymField3(const TorusGrid& grid);

  int dim() const noexcept { return d_; }
  ScalarField& operator()(int i, int j, int k) { return comp_[slot(i, j, k)]; }
  const ScalarField& operator()(int i, int j, int k) const { return comp_[slot(i, j, k)]; }
  std::size_t stored_count() const noexcept { return comp_.size(); }
  std::vector<ScalarField>& components() noexcept { return comp_; }
  const std::vector<ScalarField>& components() const noexcept { return comp_; }
  /// Sorted index triple of stored component s.
  std::array<int, 3> triple(std::size_t s) const { return triples_[s]; }

 private:
  std::size_t slot(int i, int j, int k) const;
  int d_;
  std::vector<std::array<int, 3>> triples_;
  std::vector<ScalarField> comp_;
};

/// Constant totally symmetric 3-tensor (a1).  Storage is by multiset, so every
/// permutation of (i, j, k) reads the same double.
class SymTensor3 {
 public:
  explicit SymTensor3(int d = 3);
  int dim() const noexcept { return d_; }
  double& operator()(int i, int j, int k) { return values_[slot(i, j, k)]; }
  double operator()(int i, int j, int k) const { return values_[slot(i, j, k)]; }
  std::size_t stored_count() const noexcept { return values_.size(); }
  std::array<int, 3> triple(std::size_t s) const { return triples_[s]; }
  double stored(std::size_t s) const { return values_[s]; }
  double& stored(std::size_t s) { return values_[s]; }
  /// Number of distinct orderings of the multiset in slot s (1, 3 or 6).
  int multiplicity(std::size_t s) const;

 private:
  std::size_t slot(int i, int j, int k) const;
  int d_;
  std::vector<std::array<int, 3>> triples_;
  std::vector<double> values_;
};

std::vector<std::array<int, 3>> sorted_triples(int d);

}  // namespace homoglab
