#include "homoglab/hgf1.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace homoglab {

static_assert(std::endian::native == std::endian::little, "HGF1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'H', 'G', 'F', '1'};

template <class T>
void put(std::ofstream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error(Errc::Io, "truncated HGF1 header");
  return value;
}

std::size_t power(int d, std::uint32_t rank) {
  std::size_t c = 1;
  for (std::uint32_t r = 0; r < rank; ++r) c *= static_cast<std::size_t>(d);
  return c;
}

}  // namespace

void write_hgf1(const std::string& path, const TorusGrid& grid, std::uint32_t rank,
                const std::function<ScalarField(std::size_t)>& component) {
  if (rank > 4) throw Error(Errc::InvalidArgument, "HGF1 rank must be at most 4");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot open " + path + " for writing");
  const std::size_t count = power(grid.dim(), rank);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(grid.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(grid.cells()));
  put<double>(os, grid.length());
  put<std::uint32_t>(os, rank);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(count));
  for (std::size_t c = 0; c < count; ++c) {
    const ScalarField f = component(c);
    require_same_grid(grid, f.grid(), "write_hgf1");
    os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  }
  if (!os) throw Error(Errc::Io, "write failed for " + path);
}

void write_hgf1(const std::string& path, std::uint32_t rank, const std::vector<ScalarField>& components) {
  if (components.empty()) throw Error(Errc::InvalidArgument, "no components to write");
  const TorusGrid& grid = components.front().grid();
  if (components.size() != power(grid.dim(), rank))
    throw Error(Errc::InvalidArgument, "component count does not equal d^rank");
  write_hgf1(path, grid, rank, [&](std::size_t c) { return components[c]; });
}

HgfFile read_hgf1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw Error(Errc::Io, path + " is not an HGF1 file");
  const auto d = get<std::uint32_t>(is);
  const auto n = get<std::uint32_t>(is);
  const auto L = get<double>(is);
  const auto rank = get<std::uint32_t>(is);
  const auto count = get<std::uint32_t>(is);
  TorusGrid grid(static_cast<int>(d), static_cast<int>(n), L);
  if (rank > 4 || count != power(grid.dim(), rank)) throw Error(Errc::Io, "inconsistent HGF1 header in " + path);
  HgfFile out{grid, rank, {}};
  out.components.reserve(count);
  for (std::uint32_t c = 0; c < count; ++c) {
    ScalarField f(grid);
    is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
    if (!is) throw Error(Errc::Io, "truncated HGF1 data in " + path);
    out.components.push_back(std::move(f));
  }
  return out;
}

ScalarField expand_component(const SkewField3& t, std::size_t flat) {
  const int d = t.dim();
  const int k = static_cast<int>(flat % d);
  const int j = static_cast<int>((flat / d) % d);
  const int i = static_cast<int>(flat / (d * d));
  if (j == k) return ScalarField(t.components().front().grid());
  if (j < k) return t.stored(i, j, k);
  return -1.0 * t.stored(i, k, j);
}

ScalarField expand_component(const SkewField4& t, std::size_t flat) {
  const int d = t.dim();
  const int l = static_cast<int>(flat % d);
  const int k = static_cast<int>((flat / d) % d);
  const int j = static_cast<int>((flat / (d * d)) % d);
  const int i = static_cast<int>(flat / (d * d * d));
  if (k == l) return ScalarField(t.components().front().grid());
  if (k < l) return t.stored(i, j, k, l);
  return -1.0 * t.stored(i, j, l, k);
}

ScalarField expand_component(const SymField3& t, std::size_t flat) {
  const int d = t.dim();
  const int k = static_cast<int>(flat % d);
  const int j = static_cast<int>((flat / d) % d);
  const int i = static_cast<int>(flat / (d * d));
  return t(i, j, k);
}

}  // namespace homoglab
