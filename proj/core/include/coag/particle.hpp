#pragma once

#include <array>
#include <cstdint>

#include "coag/model.hpp"

namespace coag {

struct Particle {
  std::uint64_t id = 0;
  std::array<double, kMaxDim> pos{};
  std::uint32_t mass = 1;
};

enum class DomainKind { free_space, torus };

struct Domain {
  DomainKind kind = DomainKind::free_space;
  double side = 0.0;  ///< torus side L

  bool periodic() const { return kind == DomainKind::torus; }
  static Domain free() { return {}; }
  static Domain torus(double side) { return {DomainKind::torus, side}; }
};

/// x_i - x_j, minimum image on the torus (coordinates assumed in [0,L)).
inline double displacement(double xi, double xj, const Domain& dom) {
  double z = xi - xj;
  if (dom.periodic()) {
    const double half = 0.5 * dom.side;
    if (z > half) z -= dom.side;
    else if (z < -half) z += dom.side;
  }
  return z;
}

inline double distance2(const Particle& a, const Particle& b, int dim, const Domain& dom) {
  double r2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double z = displacement(a.pos[k], b.pos[k], dom);
    r2 += z * z;
  }
  return r2;
}

}  // namespace coag
