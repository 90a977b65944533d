#include "homoglab/grid.hpp"

#include <algorithm>
#include <stdexcept>

namespace homoglab {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::BadLevel: return "BadLevel";
    case Errc::BadPeriod: return "BadPeriod";
    case Errc::MaskEmpty: return "MaskEmpty";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::NegativeSpectrum: return "NegativeSpectrum";
    case Errc::DegenerateFit: return "DegenerateFit";
    case Errc::Validation: return "Validation";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

bool is_power_of_two(int value) noexcept { return value > 0 && (value & (value - 1)) == 0; }

TorusGrid::TorusGrid(int dim, int cells, double length)
    : dim_(dim), cells_(cells), length_(length) {
  if (dim < 1 || dim > 3) throw Error(Errc::InvalidArgument, "grid dimension must be 1, 2 or 3");
  if (!is_power_of_two(cells) || cells < 4)
    throw Error(Errc::InvalidArgument, "cells per side must be a power of two >= 4");
  if (!(length > 0.0) || !std::isfinite(length))
    throw Error(Errc::InvalidArgument, "side length must be positive and finite");
  // n is a power of two, so L / n is exact and h * n == L holds bit-for-bit.
  spacing_ = length / cells;
  cell_volume_ = std::pow(spacing_, dim);
  size_ = 1;
  for (int a = 0; a < dim; ++a) size_ *= static_cast<std::size_t>(cells);
  spectral_size_ = size_ / cells * (cells / 2 + 1);
}

std::array<int, 3> TorusGrid::cell_of(std::size_t index) const noexcept {
  std::array<int, 3> cell{0, 0, 0};
  for (int a = 0; a < dim_; ++a) {
    cell[a] = static_cast<int>(index % cells_);
    index /= cells_;
  }
  return cell;
}

std::size_t TorusGrid::index_of(const std::array<int, 3>& cell) const noexcept {
  std::size_t index = 0;
  for (int a = dim_ - 1; a >= 0; --a) index = index * cells_ + static_cast<std::size_t>(cell[a]);
  return index;
}

std::array<double, 3> TorusGrid::center_of(std::size_t index) const noexcept {
  const auto cell = cell_of(index);
  std::array<double, 3> x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) x[a] = center(cell[a]);
  return x;
}

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* where) {
  if (!(a == b)) throw Error(Errc::InvalidArgument, std::string(where) + ": grid mismatch");
}

ScalarField::ScalarField(const TorusGrid& grid, RealBuffer values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw Error(Errc::InvalidArgument, "ScalarField: value count does not match grid");
}

ScalarField& ScalarField::operator+=(const ScalarField& other) {
  require_same_grid(grid_, other.grid_, "ScalarField::+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& other) {
  require_same_grid(grid_, other.grid_, "ScalarField::-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator*=(double factor) noexcept {
  for (auto& v : values_) v *= factor;
  return *this;
}

ScalarField& ScalarField::add_scaled(double factor, const ScalarField& other) {
  require_same_grid(grid_, other.grid_, "ScalarField::add_scaled");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += factor * other.values_[i];
  return *this;
}

ScalarField& ScalarField::add_product(double factor, const ScalarField& x, const ScalarField& y) {
  require_same_grid(grid_, x.grid_, "ScalarField::add_product");
  require_same_grid(grid_, y.grid_, "ScalarField::add_product");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += factor * (x.values_[i] * y.values_[i]);
  return *this;
}

void ScalarField::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

bool ScalarField::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ScalarField operator+(ScalarField lhs, const ScalarField& rhs) { return lhs += rhs; }
ScalarField operator-(ScalarField lhs, const ScalarField& rhs) { return lhs -= rhs; }
ScalarField operator*(double factor, ScalarField field) { return field *= factor; }

Spectrum& Spectrum::operator+=(const Spectrum& other) {
  require_same_grid(grid_, other.grid_, "Spectrum::+=");
  for (std::size_t i = 0; i < modes_.size(); ++i) modes_[i] += other.modes_[i];
  return *this;
}

Spectrum& Spectrum::operator-=(const Spectrum& other) {
  require_same_grid(grid_, other.grid_, "Spectrum::-=");
  for (std::size_t i = 0; i < modes_.size(); ++i) modes_[i] -= other.modes_[i];
  return *this;
}

Spectrum& Spectrum::operator*=(double factor) noexcept {
  for (auto& m : modes_) m *= factor;
  return *this;
}

Spectrum& Spectrum::add_scaled(double factor, const Spectrum& other) {
  require_same_grid(grid_, other.grid_, "Spectrum::add_scaled");
  for (std::size_t i = 0; i < modes_.size(); ++i) modes_[i] += factor * other.modes_[i];
  return *this;
}

void Spectrum::fill(Complex value) noexcept { std::fill(modes_.begin(), modes_.end(), value); }

int skew_pair_index(int d, int j, int k) noexcept {
  // pairs ordered (0,1), (0,2), ..., (1,2), ...
  int index = 0;
  for (int a = 0; a < j; ++a) index += d - 1 - a;
  return index + (k - j - 1);
}

SkewField3::SkewField3(const TorusGrid& grid)
    : d_(grid.dim()), pairs_(grid.dim() * (grid.dim() - 1) / 2),
      comp_(static_cast<std::size_t>(grid.dim() * pairs_), ScalarField(grid)) {}

std::size_t SkewField3::slot(int i, int j, int k) const noexcept {
  return static_cast<std::size_t>(i * pairs_ + skew_pair_index(d_, j, k));
}

double SkewField3::at(int i, int j, int k, std::size_t cell) const {
  if (j == k) return 0.0;
  return j < k ? comp_[slot(i, j, k)][cell] : -comp_[slot(i, k, j)][cell];
}

SkewField4::SkewField4(const TorusGrid& grid)
    : d_(grid.dim()), pairs_(grid.dim() * (grid.dim() - 1) / 2),
      comp_(static_cast<std::size_t>(grid.dim() * grid.dim() * pairs_), ScalarField(grid)) {}

std::size_t SkewField4::slot(int i, int j, int k, int l) const noexcept {
  return static_cast<std::size_t>((i * d_ + j) * pairs_ + skew_pair_index(d_, k, l));
}

double SkewField4::at(int i, int j, int k, int l, std::size_t cell) const {
  if (k == l) return 0.0;
  return k < l ? comp_[slot(i, j, k, l)][cell] : -comp_[slot(i, j, l, k)][cell];
}

std::vector<std::array<int, 3>> sorted_triples(int d) {
  std::vector<std::array<int, 3>> out;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j)
      for (int k = j; k < d; ++k) out.push_back({i, j, k});
  return out;
}

namespace {
std::size_t triple_slot(const std::vector<std::array<int, 3>>& triples, int i, int j, int k) {
  std::array<int, 3> t{i, j, k};
  std::sort(t.begin(), t.end());
  const auto it = std::lower_bound(triples.begin(), triples.end(), t);
  return static_cast<std::size_t>(it - triples.begin());
}
}  // namespace

SymField3::SymField3(const TorusGrid& grid)
    : d_(grid.dim()), triples_(sorted_triples(grid.dim())),
      comp_(triples_.size(), ScalarField(grid)) {}

std::size_t SymField3::slot(int i, int j, int k) const { return triple_slot(triples_, i, j, k); }

SymTensor3::SymTensor3(int d) : d_(d), triples_(sorted_triples(d)), values_(triples_.size(), 0.0) {}

std::size_t SymTensor3::slot(int i, int j, int k) const { return triple_slot(triples_, i, j, k); }

int SymTensor3::multiplicity(std::size_t s) const {
  const auto& t = triples_[s];
  if (t[0] == t[2]) return 1;
  if (t[0] == t[1] || t[1] == t[2]) return 3;
  return 6;
}

}  // namespace homoglab
