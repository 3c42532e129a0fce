#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coag/model.hpp"
#include "coag/particle.hpp"
#include "coag/rng.hpp"
#include "coag/spatial_hash.hpp"

namespace coag {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Configuration {
  int dim = 3;
  std::vector<Particle> particles;
  double time = 0.0;
  double epsilon = 1.0;
  Domain domain;
  std::uint64_t next_id = 0;

  std::uint64_t total_mass() const;
  /// Index of the particle with the given id, or -1.
  std::int64_t find(std::uint64_t id) const;
};

struct CollisionEvent {
  double t = 0.0;
  std::uint64_t id_a = 0;
  std::uint64_t id_b = 0;
  std::uint32_t mass_a = 0;
  std::uint32_t mass_b = 0;
  std::uint64_t new_id = 0;
  std::array<double, kMaxDim> new_pos{};
  bool chose_first = true;
};

/// Everything the dynamics needs besides the state.
struct MicroModel {
  SimParams params;
  KernelV v;
  RatePolicy alpha;
  DiffusionPolicy dd;
  Domain domain;
  int m_max = kDefaultMassCap;
  /// Largest tolerated number of particles above m_max; negative = no limit.
  std::int64_t max_overflow = -1;
};

struct CountRow {
  double t = 0.0;
  std::vector<std::int64_t> counts;  ///< index 0..m_max-1 = mass 1..m_max, last = overflow
};

struct QSample {
  double t = 0.0;
  double q = 0.0;
};

struct TrajectoryStats {
  std::int64_t initial_count = 0;
  std::int64_t final_count = 0;
  std::int64_t collision_count = 0;
  double rate_integral = 0.0;  ///< ε^{d-2} ∫ Σ_pairs α V_ε dt
  double q_integral = 0.0;     ///< ∫ Q(0) dt (rectangle rule over steps)
  std::vector<QSample> q_series;
  std::vector<std::pair<double, std::uint64_t>> snapshots;  ///< (t, digest)
  std::vector<CountRow> counts;
  std::vector<CollisionEvent> events;
  std::int64_t steps = 0;
  std::int64_t max_overflow_seen = 0;
};

using SpatialFn = std::function<double(std::span<const double>)>;

/// Q(0) = ε^{d-2} Σ_{i≠j} V_ε(x_i-x_j) α(m_i,m_j) J(x_i) J̄(x_j) 1{m_i=M1, m_j=M2}.
struct QSpec {
  std::int64_t m1 = 1;
  std::int64_t m2 = 1;
  SpatialFn j;
  SpatialFn jbar;
};

struct RunOptions {
  bool record_events = true;
  std::int64_t count_every = 0;  ///< steps between count rows; 0 = start and end only
  std::optional<QSpec> q;
  std::int64_t q_sample_every = 1;  ///< steps between stored Q samples (∫Q uses every step)
  std::vector<double> observe_times;
  std::function<void(const Configuration&)> observer;
  double cells_per_particle = 8.0;  ///< spatial hash density
};

/// V_ε(z) = ε^{-2} V(z/ε) for displacement z.
double kernel_eps(const KernelV& v, std::span<const double> z, double r2, double epsilon);

/// N i.i.d. draws from h_n(x)/Z over (position, mass).
Configuration sample_initial(const InitialDensities& h, const SimParams& params,
                             const Domain& domain, Philox4x32& rng);

/// Independent Gaussian increments of variance 2 d(m) τ per coordinate.
void diffuse(Configuration& cfg, const DiffusionPolicy& dd, double tau, Philox4x32& rng);

/// All unordered pairs closer than C0 ε.
std::vector<PairCandidate> detect_pairs(const Configuration& cfg, SpatialHash& hash);

/// Removes both particles and inserts the merged one at pos_a with
/// probability m_a/(m_a+m_b), else at pos_b.
CollisionEvent merge(Configuration& cfg, std::uint64_t id_a, std::uint64_t id_b,
                     Philox4x32& rng);

struct StepResult {
  std::vector<CollisionEvent> events;
  double rate_sum = 0.0;  ///< Σ_pairs α V_ε at the pre-collision state
  double q_value = 0.0;
};

/// Visits `pairs` in uniformly random order; each coagulates with probability
/// 1 - exp(-dt ε^{-2} V α), skipping pairs with a consumed member.
StepResult coagulate_step(Configuration& cfg, const MicroModel& model,
                          std::vector<PairCandidate>& pairs, double dt, Philox4x32& rng,
                          const QSpec* q = nullptr);

/// Alternates diffuse and coagulate_step from cfg.time to params.horizon.
TrajectoryStats run(Configuration& cfg, const MicroModel& model, Philox4x32& rng,
                    const RunOptions& options = {});

/// Per-mass counts with overflow bucket (size m_max + 1).
std::vector<std::int64_t> mass_counts(const Configuration& cfg, int m_max);

/// Q(0) by direct O(N^2) summation.
double q_statistic(const Configuration& cfg, const MicroModel& model, const QSpec& q);

/// FNV-1a over ids, masses and position bits.
std::uint64_t config_digest(const Configuration& cfg);

// ---------------------------------------------------------------------------
// Mollified empirical density
// ---------------------------------------------------------------------------

/// η: the normalised C-infinity bump on the unit ball.
class Mollifier {
 public:
  explicit Mollifier(int dim);
  int dim() const { return dim_; }
  /// η(y) for |y|^2 = s2.
  double operator()(double s2) const;
  /// ∫η^2.
  double square_integral() const { return square_integral_; }

 private:
  int dim_;
  double norm_;
  double square_integral_;
};

struct DensityGrid {
  int dim = 3;
  std::array<double, kMaxDim> origin{};
  double spacing = 1.0;
  std::array<int, kMaxDim> nodes{};
  bool periodic = false;  ///< nodes cover [0,L)^d with spacing L/nodes

  std::size_t size() const;
  std::array<double, kMaxDim> point(std::size_t flat) const;
  static DensityGrid torus(int dim, double side, int nodes_per_axis);
  static DensityGrid box(int dim, std::span<const double> lo, double spacing,
                         std::span<const int> nodes);
};

/// f^δ(n,x) = ε^{d-2} Σ_{m_i = n} η^δ(x - x_i) at the grid nodes. With
/// `self_square` the field ε^{2(d-2)} Σ η^δ(x - x_i)^2 is accumulated too.
std::vector<double> empirical_density(const Configuration& cfg, std::int64_t mass,
                                      double delta, const Mollifier& eta,
                                      const DensityGrid& grid,
                                      std::vector<double>* self_square = nullptr);

/// Trapezoidal (periodic: rectangle) integral of a grid field.
double grid_integral(const DensityGrid& grid, std::span<const double> field);

}  // namespace coag
