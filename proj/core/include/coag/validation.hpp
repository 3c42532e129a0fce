#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coag/macro_pde.hpp"
#include "coag/micro_sim.hpp"

namespace coag {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bounded continuous test function J(x) in closed form.
struct TestFunctional {
  enum class Kind { constant, gaussian, box, cosine };

  Kind kind = Kind::constant;
  double amplitude = 1.0;
  double offset = 0.0;          ///< cosine: J = offset + amplitude cos(2π x_axis / period)
  std::vector<double> center;   ///< gaussian, box
  double width = 1.0;           ///< gaussian: σ; box: half side
  double edge = 0.1;            ///< box: width of the smooth edge
  int axis = 0;
  double period = 1.0;
  double torus_side = 0.0;      ///< > 0: distances use the minimum image

  static TestFunctional constant(double c);
  static TestFunctional gaussian(std::vector<double> center, double sigma, double amplitude = 1.0);
  static TestFunctional box(std::vector<double> center, double half_side, double edge,
                            double amplitude = 1.0);
  static TestFunctional cosine(int axis, double period, double offset, double amplitude);

  double operator()(std::span<const double> x) const;
  double sup_norm() const;
  std::string describe() const;
};

TestFunctional::Kind parse_functional_kind(const std::string& s);
std::string to_string(TestFunctional::Kind k);

/// ∫_{[0,L)^d} J by the midpoint rule with `nodes` points per axis.
double torus_integral(const TestFunctional& j, int dim, double side, int nodes = 64);

/// ∫ J h_n over the torus by the midpoint rule.
double reference_integral(const InitialDensities& h, std::int64_t n, const TestFunctional& j,
                          double side, int nodes = 64);

/// ε^{d-2} Σ_{m_i = n} J(x_i).
double micro_functional(const Configuration& cfg, std::int64_t n, const TestFunctional& j);

/// ∫ J f_n dx for one snapshot of `layout` (homogeneous: f_n ∫_torus J).
double macro_functional(const MacroField& layout, std::span<const double> f, std::int64_t n,
                        const TestFunctional& j, int dim, double torus_side);

struct ComparisonRow {
  std::int64_t n = 1;
  double t = 0.0;
  double micro = 0.0;       ///< replica mean of the micro value
  double macro = 0.0;
  double abs_error = 0.0;   ///< replica mean of |micro_k - macro|
  double spread = 0.0;      ///< standard error of the micro mean
  int replicas = 0;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::int64_t n_particles = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::vector<std::uint64_t> seeds;
  std::uint64_t config_hash = 0;
};

/// Row from per-replica micro values and one macro value.
ComparisonRow compare_values(std::span<const double> micro_values, double macro, std::int64_t n,
                             double t);

/// Weak-form functional error at time t. Rejects runs whose identity hashes differ
/// or whose times do not match t.
ComparisonRow theorem1_functional(std::span<const Configuration> replicas,
                                  const MacroField& layout, const MacroSnapshot& snap,
                                  const TestFunctional& j, std::int64_t n, double t,
                                  std::uint64_t micro_hash, std::uint64_t macro_hash);

// ---------------------------------------------------------------------------
// Stosszahlansatz
// ---------------------------------------------------------------------------

struct StosszahlSample {
  double t = 0.0;
  double integrand = 0.0;  ///< ∫ f^δ_{M1} f^δ_{M2} J J̄ at time t
};

/// ∫ f^δ_{M1} f^δ_{M2} J J̄ on `grid`. For M1 = M2 the diagonal i = j part
/// ε^{2(d-2)} Σ η^δ(x-x_i)^2 is removed, matching the i ≠ j sum in Q.
double stosszahl_integrand(const Configuration& cfg, const QSpec& q, double delta,
                           const Mollifier& eta, const DensityGrid& grid);

struct StosszahlDiagnostic {
  double lhs = 0.0;  ///< ∫ Q(0) dt
  double rhs = 0.0;  ///< β ∫ samples dt (trapezoid)
  double gap = 0.0;  ///< |lhs - rhs| / lhs
  double beta = 0.0;
};

StosszahlDiagnostic stosszahlansatz_check(double q_integral,
                                          std::span<const StosszahlSample> samples,
                                          double beta);

/// δ = (ε L)^{1/2}.
double default_delta(double epsilon, double side);

// ---------------------------------------------------------------------------
// Effective rate
// ---------------------------------------------------------------------------

struct CountSeries {
  std::vector<double> t;
  std::vector<double> count;  ///< number of mass-1 particles
};

struct RateFitReport {
  double c = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double rel_to_beta = 0.0;   ///< |c - β| / β
  double separation = 0.0;    ///< max(α/c, c/α)
  std::int64_t collisions = 0;
  int replicas = 0;
  int points = 0;
  bool closer_to_beta = false;
  bool pass = false;
};

/// Fits 1/f_1 = a + c t over t <= window_end, pooled over replicas, with
/// f_1 = density_scale · count. The interval is a percentile bootstrap over
/// replicas. Throws if fewer than 100 collisions were observed.
RateFitReport effective_rate_experiment(std::span<const CountSeries> series,
                                        double density_scale, double window_end, double alpha,
                                        double beta, std::int64_t collisions,
                                        int bootstrap = 1000, std::uint64_t seed = 1,
                                        double tolerance = 0.25);

// ---------------------------------------------------------------------------
// Propensity
// ---------------------------------------------------------------------------

struct PropensityReport {
  int replicas = 0;
  double z = 0.0;
  double mean = 0.0;
  double sem = 0.0;
  std::int64_t max_collisions = 0;
  std::int64_t n_particles = 0;
  bool bound_ok = false;
  bool count_ok = false;
  bool pass = false;
};

/// Mean rate integral against Z + 3 SEM and collision count <= N per replica.
PropensityReport propensity_audit(std::span<const TrajectoryStats> stats, double z);

}  // namespace coag
