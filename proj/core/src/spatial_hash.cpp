#include "coag/spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coag {

namespace {
constexpr std::uint32_t kNone = 0xffffffffu;
}  // namespace

SpatialHash::SpatialHash(int dim, double range, Domain domain, double cells_per_particle)
    : dim_(dim), range_(range), domain_(domain), cells_per_particle_(cells_per_particle) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("spatial hash: bad dim");
  if (!(range > 0.0)) throw std::invalid_argument("spatial hash: range must be > 0");
  if (domain.periodic() && !(2.0 * range < domain.side)) {
    throw std::invalid_argument("spatial hash: torus side must exceed twice the range");
  }
  std::array<int, kMaxDim> off{};
  off.fill(-1);
  while (true) {
    // Keep offsets whose highest nonzero component is positive.
    int lead = 0;
    for (int a = dim_ - 1; a >= 0 && lead == 0; --a) lead = off[a];
    if (lead > 0) offsets_.push_back(off);
    int a = 0;
    while (a < dim_ && ++off[a] == 2) off[a++] = -1;
    if (a == dim_) break;
  }
}

std::uint32_t SpatialHash::cell_index(const Particle& p) const {
  std::uint32_t flat = 0;
  for (int a = dim_ - 1; a >= 0; --a) {
    int c = static_cast<int>((p.pos[a] - origin_[a]) * inv_cell_size_[a]);
    c = std::clamp(c, 0, cells_[a] - 1);
    flat = flat * static_cast<std::uint32_t>(cells_[a]) + static_cast<std::uint32_t>(c);
  }
  return flat;
}

void SpatialHash::rebuild(std::span<const Particle> particles) {
  const std::size_t n = particles.size();
  const double cap = std::max(27.0, cells_per_particle_ * static_cast<double>(n));
  const int cap_axis = std::max(1, static_cast<int>(std::floor(std::pow(cap, 1.0 / dim_))));

  brute_ = false;
  if (domain_.periodic()) {
    const int per_axis = std::min(cap_axis, static_cast<int>(std::floor(domain_.side / range_)));
    if (per_axis < 3) brute_ = true;
    for (int a = 0; a < dim_; ++a) {
      cells_[a] = std::max(per_axis, 1);
      cell_size_[a] = domain_.side / cells_[a];
      origin_[a] = 0.0;
    }
  } else {
    for (int a = 0; a < dim_; ++a) {
      double lo = 0.0, hi = 0.0;
      if (n > 0) {
        lo = hi = particles[0].pos[a];
        for (const auto& p : particles) {
          lo = std::min(lo, p.pos[a]);
          hi = std::max(hi, p.pos[a]);
        }
      }
      const double extent = hi - lo;
      cells_[a] = std::clamp(static_cast<int>(std::floor(extent / range_)), 1, cap_axis);
      cell_size_[a] = std::max(extent / cells_[a], range_);
      origin_[a] = lo;
    }
  }

  for (int a = 0; a < dim_; ++a) inv_cell_size_[a] = 1.0 / cell_size_[a];
  cell_of_.resize(n);
  if (!brute_ && cells_ != stencil_layout_) {
    std::size_t total = 1;
    for (int a = 0; a < dim_; ++a) total *= static_cast<std::size_t>(cells_[a]);
    build_stencil(total);
    stencil_layout_ = cells_;
  }
  if (brute_) {
    starts_.clear();
    sorted_.clear();
    return;
  }
  std::size_t total = 1;
  for (int a = 0; a < dim_; ++a) total *= static_cast<std::size_t>(cells_[a]);
  starts_.assign(total + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cell_of_[i] = cell_index(particles[i]);
    ++starts_[cell_of_[i] + 1];
  }
  for (std::size_t c = 0; c < total; ++c) starts_[c + 1] += starts_[c];
  sorted_.resize(n);
  std::vector<std::uint32_t> fill(starts_.begin(), starts_.end() - 1);
  for (std::size_t i = 0; i < n; ++i) sorted_[fill[cell_of_[i]]++] = static_cast<std::uint32_t>(i);
  sorted_pos_.resize(n * static_cast<std::size_t>(dim_));
  for (std::size_t k = 0; k < n; ++k) {
    const Particle& p = particles[sorted_[k]];
    std::copy(p.pos.begin(), p.pos.begin() + dim_, sorted_pos_.begin() + k * dim_);
  }
  occupied_.clear();
  for (std::size_t c = 0; c < total; ++c) {
    if (starts_[c] != starts_[c + 1]) occupied_.push_back(static_cast<std::uint32_t>(c));
  }
}

void SpatialHash::pairs(std::span<const Particle> particles,
                        std::vector<PairCandidate>& out) const {
  const double range2 = range_ * range_;
  auto consider = [&](std::uint32_t i, std::uint32_t j) {
    const double r2 = distance2(particles[i], particles[j], dim_, domain_);
    if (r2 < range2) {
      if (i < j) out.push_back({i, j, r2});
      else out.push_back({j, i, r2});
    }
  };
  if (brute_) {
    const auto n = static_cast<std::uint32_t>(particles.size());
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = i + 1; j < n; ++j) consider(i, j);
    }
    return;
  }
  const std::size_t h = offsets_.size();
  const int d = dim_;
  const bool periodic = domain_.periodic();
  const double side = domain_.side;
  const double half = 0.5 * side;
  const double* pos = sorted_pos_.data();
  auto check = [&](std::uint32_t x, std::uint32_t y) {
    const double* px = pos + static_cast<std::size_t>(x) * d;
    const double* py = pos + static_cast<std::size_t>(y) * d;
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) {
      double z = px[a] - py[a];
      if (periodic) {
        if (z > half) z -= side;
        else if (z < -half) z += side;
      }
      r2 += z * z;
    }
    if (r2 < range2) {
      const std::uint32_t i = sorted_[x], j = sorted_[y];
      if (i < j) out.push_back({i, j, r2});
      else out.push_back({j, i, r2});
    }
  };
  for (const std::uint32_t c : occupied_) {
    const std::uint32_t begin = starts_[c];
    const std::uint32_t end = starts_[c + 1];
    for (std::uint32_t x = begin; x < end; ++x) {
      for (std::uint32_t y = x + 1; y < end; ++y) check(x, y);
    }
    const std::uint32_t* nbs = stencil_.data() + static_cast<std::size_t>(c) * h;
    for (std::size_t k = 0; k < h; ++k) {
      const std::uint32_t nb = nbs[k];
      if (nb == kNone) continue;
      const std::uint32_t nb_begin = starts_[nb];
      const std::uint32_t nb_end = starts_[nb + 1];
      for (std::uint32_t x = begin; x < end; ++x) {
        for (std::uint32_t y = nb_begin; y < nb_end; ++y) check(x, y);
      }
    }
  }
}

void SpatialHash::build_stencil(std::size_t total) {
  const std::size_t h = offsets_.size();
  const bool periodic = domain_.periodic();
  stencil_.assign(total * h, kNone);
  std::array<int, kMaxDim> coord{};
  for (std::size_t c = 0; c < total; ++c) {
    for (std::size_t k = 0; k < h; ++k) {
      const auto& off = offsets_[k];
      std::size_t flat = 0;
      bool inside = true;
      for (int a = dim_ - 1; a >= 0; --a) {
        int q = coord[a] + off[a];
        if (periodic) {
          if (q < 0) q += cells_[a];
          else if (q >= cells_[a]) q -= cells_[a];
        } else if (q < 0 || q >= cells_[a]) {
          inside = false;
          break;
        }
        flat = flat * static_cast<std::size_t>(cells_[a]) + static_cast<std::size_t>(q);
      }
      if (inside) stencil_[c * h + k] = static_cast<std::uint32_t>(flat);
    }
    int a = 0;
    while (a < dim_ && ++coord[a] == cells_[a]) coord[a++] = 0;
  }
}

std::vector<PairCandidate> brute_force_pairs(std::span<const Particle> particles, int dim,
                                             double range, const Domain& domain) {
  std::vector<PairCandidate> out;
  const auto n = static_cast<std::uint32_t>(particles.size());
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      const double r2 = distance2(particles[i], particles[j], dim, domain);
      if (r2 < range * range) out.push_back({i, j, r2});
    }
  }
  return out;
}

}  // namespace coag
