#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sernn/error.hpp"
#include "sernn/numerics.hpp"

namespace sernn {

struct LatticeDims {
  std::size_t nx = 5;
  std::size_t ny = 5;
  std::size_t nz = 4;

  std::size_t count() const noexcept { return nx * ny * nz; }
  friend bool operator==(const LatticeDims&, const LatticeDims&) = default;
};

inline constexpr std::size_t kMaxLatticeNeurons = 10000;

// Neurons on an evenly spaced integer grid; x varies fastest, z slowest.
struct DistanceLattice {
  LatticeDims dims;
  std::vector<std::array<int, 3>> coords;
  Matrix distance;

  std::size_t size() const noexcept { return coords.size(); }
};

inline DistanceLattice build_lattice(LatticeDims dims = {}) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
    throw InvalidArgument("build_lattice: every dimension must be >= 1");
  }
  if (dims.nx > kMaxLatticeNeurons || dims.ny > kMaxLatticeNeurons || dims.nz > kMaxLatticeNeurons ||
      dims.count() > kMaxLatticeNeurons) {
    throw InvalidArgument("build_lattice: lattice exceeds 10^4 neurons");
  }
  DistanceLattice lat;
  lat.dims = dims;
  const std::size_t n = dims.count();
  lat.coords.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    lat.coords.push_back({static_cast<int>(i % dims.nx), static_cast<int>((i / dims.nx) % dims.ny),
                          static_cast<int>(i / (dims.nx * dims.ny))});
  }
  const auto nn = static_cast<Eigen::Index>(n);
  lat.distance = Matrix::Zero(nn, nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = i + 1; j < nn; ++j) {
      const auto& a = lat.coords[static_cast<std::size_t>(i)];
      const auto& b = lat.coords[static_cast<std::size_t>(j)];
      const double dx = a[0] - b[0];
      const double dy = a[1] - b[1];
      const double dz = a[2] - b[2];
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      lat.distance(i, j) = d;
      lat.distance(j, i) = d;
    }
  }
  return lat;
}

}  // namespace sernn
