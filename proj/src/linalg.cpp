#include "homoglab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace homoglab {

SmallMatrix SmallMatrix::identity(int dim) { return diagonal(dim, 1.0); }

SmallMatrix SmallMatrix::diagonal(int dim, double value) {
  SmallMatrix m(dim);
  for (int i = 0; i < dim; ++i) m(i, i) = value;
  return m;
}

SmallMatrix SmallMatrix::transpose() const {
  SmallMatrix t(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) t(i, j) = (*this)(j, i);
  return t;
}

SmallMatrix SmallMatrix::symmetric_part() const {
  SmallMatrix s(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
  return s;
}

double SmallMatrix::max_abs_diff(const SmallMatrix& other) const {
  double m = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m = std::max(m, std::fabs((*this)(i, j) - other(i, j)));
  return m;
}

double SmallMatrix::quadratic(const double* xi) const noexcept {
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s += (*this)(i, j) * xi[i] * xi[j];
  return s;
}

std::string SmallMatrix::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (int i = 0; i < d; ++i) {
    os << (i ? ", [" : "[");
    for (int j = 0; j < d; ++j) os << (j ? ", " : "") << (*this)(i, j);
    os << ']';
  }
  os << ']';
  return os.str();
}

bool SmallMatrix::operator==(const SmallMatrix& other) const noexcept {
  if (d != other.d) return false;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if ((*this)(i, j) != other(i, j)) return false;
  return true;
}

std::array<double, 3> symmetric_eigenvalues(const SmallMatrix& s) {
  std::array<double, 3> ev{0.0, 0.0, 0.0};
  if (s.d == 1) {
    ev[0] = s(0, 0);
    return ev;
  }
  if (s.d == 2) {
    const double mean = 0.5 * (s(0, 0) + s(1, 1));
    const double half_diff = 0.5 * (s(0, 0) - s(1, 1));
    const double r = std::hypot(half_diff, s(0, 1));
    ev[0] = mean - r;
    ev[1] = mean + r;
    return ev;
  }
  // Trigonometric solution of the characteristic cubic (Smith 1961).
  const double p1 = s(0, 1) * s(0, 1) + s(0, 2) * s(0, 2) + s(1, 2) * s(1, 2);
  const double q = (s(0, 0) + s(1, 1) + s(2, 2)) / 3.0;
  if (p1 == 0.0) {
    ev = {s(0, 0), s(1, 1), s(2, 2)};
    std::sort(ev.begin(), ev.end());
    return ev;
  }
  const double p2 = (s(0, 0) - q) * (s(0, 0) - q) + (s(1, 1) - q) * (s(1, 1) - q) +
                    (s(2, 2) - q) * (s(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  SmallMatrix b(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = (s(i, j) - (i == j ? q : 0.0)) / p;
  const double det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                     b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                     b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  const double r = std::clamp(det / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double largest = q + 2.0 * p * std::cos(phi);
  const double smallest = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  ev = {smallest, 3.0 * q - largest - smallest, largest};
  std::sort(ev.begin(), ev.end());
  return ev;
}

double min_symmetric_eigenvalue(const SmallMatrix& m) { return symmetric_eigenvalues(m.symmetric_part())[0]; }

double operator_norm(const SmallMatrix& m) {
  SmallMatrix mtm(m.d);
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) {
      double s = 0.0;
      for (int k = 0; k < m.d; ++k) s += m(k, i) * m(k, j);
      mtm(i, j) = s;
    }
  const auto ev = symmetric_eigenvalues(mtm);
  return std::sqrt(std::max(0.0, ev[m.d - 1]));
}

}  // namespace homoglab
