#pragma once

#include <string>

#include "homoglab/grid.hpp"
#include "homoglab/linalg.hpp"

namespace homoglab {

/// Per-cell d x d coefficient a(x) with its ellipticity ratio and provenance.
struct CoefficientField {
  MatrixField a;
  double lambda = 1.0;
  /// Boundedness constant: |a(x) v| <= upper |v|.
  double upper = 1.0;
  bool symmetric = true;
  /// Free-form description: ensemble spec and seed, or deterministic kind.
  std::string provenance;
  /// Set when a mollification pass was applied.
  bool filtered = false;
  /// Cells whose matrix was rescaled to restore the ellipticity bounds.
  int rescale_events = 0;
  /// Length scale used for eps in the a1 definition (correlation length or period).
  double eps_scale = 0.0;

  explicit CoefficientField(const TorusGrid& grid) : a(grid) {}

  const TorusGrid& grid() const { return a.grid(); }
  int dim() const noexcept { return a.d; }
  SmallMatrix at(std::size_t cell) const;
  void set(std::size_t cell, const SmallMatrix& m);
  /// Torus average of each entry.
  SmallMatrix average() const;
  /// True when a(x) = alpha(x) I in every cell.
  bool is_isotropic() const;
  CoefficientField transpose() const;
};

}  // namespace homoglab
