#pragma once

#include <array>
#include <string>

namespace homoglab {

/// Dense d x d matrix for d <= 3, row-major.
struct SmallMatrix {
  int d = 3;
  std::array<double, 9> v{};

  SmallMatrix() = default;
  explicit SmallMatrix(int dim) : d(dim) {}

  static SmallMatrix identity(int dim);
  static SmallMatrix diagonal(int dim, double value);

  double& operator()(int i, int j) noexcept { return v[i * 3 + j]; }
  double operator()(int i, int j) const noexcept { return v[i * 3 + j]; }

  SmallMatrix transpose() const;
  SmallMatrix symmetric_part() const;
  double max_abs_diff(const SmallMatrix& other) const;
  /// A xi . xi
  double quadratic(const double* xi) const noexcept;
  std::string to_string() const;

  bool operator==(const SmallMatrix& other) const noexcept;
};

/// Eigenvalues of a symmetric matrix (closed form for d <= 3), ascending.
std::array<double, 3> symmetric_eigenvalues(const SmallMatrix& sym);
/// Smallest eigenvalue of the symmetric part.
double min_symmetric_eigenvalue(const SmallMatrix& m);
/// Spectral norm |M| = sqrt(max eig(M^T M)).
double operator_norm(const SmallMatrix& m);

}  // namespace homoglab
