#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coag/particle.hpp"

namespace coag {

struct PairCandidate {
  std::uint32_t a = 0;  ///< index into the particle array, a < b
  std::uint32_t b = 0;
  double r2 = 0.0;
};

/// Dense cell list over the torus or the particles' bounding box. Cells are
/// at least `range` wide on every axis; the total count is capped at
/// cells_per_particle * N so memory stays linear in N. Falls back to all-pairs enumeration when a
/// periodic axis would hold fewer than three cells.
class SpatialHash {
 public:
  /// `cells_per_particle` bounds the total cell count relative to N.
  SpatialHash(int dim, double range, Domain domain, double cells_per_particle = 8.0);

  void rebuild(std::span<const Particle> particles);

  /// Appends every unordered pair with squared distance < range^2.
  void pairs(std::span<const Particle> particles, std::vector<PairCandidate>& out) const;

  int dim() const { return dim_; }
  double range() const { return range_; }
  bool brute_force() const { return brute_; }
  double cell_size(int axis) const { return cell_size_[axis]; }
  int cells_per_axis(int axis) const { return cells_[axis]; }
  std::size_t cell_count() const { return starts_.empty() ? 0 : starts_.size() - 1; }
  /// Cell holding particle i after the last rebuild.
  std::uint32_t cell_of(std::size_t i) const { return cell_of_[i]; }

 private:
  std::uint32_t cell_index(const Particle& p) const;
  void build_stencil(std::size_t total);

  int dim_;
  double range_;
  Domain domain_;
  bool brute_ = false;
  std::array<int, kMaxDim> cells_{};
  std::array<double, kMaxDim> cell_size_{};
  std::array<double, kMaxDim> inv_cell_size_{};
  std::array<double, kMaxDim> origin_{};
  std::vector<std::array<int, kMaxDim>> offsets_;  ///< half stencil
  std::array<int, kMaxDim> stencil_layout_{};
  std::vector<std::uint32_t> stencil_;  ///< per cell, neighbour cells (or kNone)
  std::vector<std::uint32_t> cell_of_;
  std::vector<std::uint32_t> starts_;
  std::vector<std::uint32_t> sorted_;
  std::vector<double> sorted_pos_;      ///< positions in sorted order
  std::vector<std::uint32_t> occupied_;
  double cells_per_particle_;
};

/// O(N^2) reference enumeration.
std::vector<PairCandidate> brute_force_pairs(std::span<const Particle> particles, int dim,
                                             double range, const Domain& domain);

}  // namespace coag
