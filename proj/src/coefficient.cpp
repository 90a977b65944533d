#include "homoglab/coefficient.hpp"

#include "homoglab/reduce.hpp"

namespace homoglab {

SmallMatrix CoefficientField::at(std::size_t cell) const {
  SmallMatrix m(a.d);
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) m(i, j) = a(i, j)[cell];
  return m;
}

void CoefficientField::set(std::size_t cell, const SmallMatrix& m) {
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) a(i, j)[cell] = m(i, j);
}

SmallMatrix CoefficientField::average() const {
  SmallMatrix m(a.d);
  const double count = static_cast<double>(grid().size());
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) m(i, j) = compensated_sum(a(i, j).values()) / count;
  return m;
}

bool CoefficientField::is_isotropic() const {
  const std::size_t n = grid().size();
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) {
      const ScalarField& c = a(i, j);
      const ScalarField& diag = a(0, 0);
      for (std::size_t x = 0; x < n; ++x) {
        if (i == j ? c[x] != diag[x] : c[x] != 0.0) return false;
      }
    }
  return true;
}

CoefficientField CoefficientField::transpose() const {
  CoefficientField t = *this;
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) t.a(i, j) = a(j, i);
  return t;
}

}  // namespace homoglab
