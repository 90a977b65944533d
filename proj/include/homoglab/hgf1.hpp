#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "homoglab/grid.hpp"

namespace homoglab {

/// Binary field file: "HGF1", then little-endian u32 d, u32 n, f64 L, u32 rank,
/// u32 component_count, then component-major f64 cell data (axis 0 fastest).
struct HgfFile {
  TorusGrid grid;
  std::uint32_t rank = 0;
  std::vector<ScalarField> components;
};

/// Writes d^rank components produced one at a time, so large tensors need not be expanded in memory.
void write_hgf1(const std::string& path, const TorusGrid& grid, std::uint32_t rank,
                const std::function<ScalarField(std::size_t)>& component);
void write_hgf1(const std::string& path, std::uint32_t rank, const std::vector<ScalarField>& components);
HgfFile read_hgf1(const std::string& path);

/// Full d^3 expansion of the skew rank-3 layout, component index (i*d + j)*d + k.
ScalarField expand_component(const SkewField3& t, std::size_t flat);
/// Full d^4 expansion of the skew rank-4 layout, component index ((i*d + j)*d + k)*d + l.
ScalarField expand_component(const SkewField4& t, std::size_t flat);
ScalarField expand_component(const SymField3& t, std::size_t flat);

}  // namespace homoglab
