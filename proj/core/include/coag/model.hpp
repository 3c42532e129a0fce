#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace coag {

/// Largest spatial dimension supported by the fixed-size particle storage.
inline constexpr int kMaxDim = 8;

/// Default mass cap M_max.
inline constexpr int kDefaultMassCap = 50;

/// Thrown when a model parameter violates its contract.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Surface area of the unit sphere S^{d-1}.
double unit_sphere_area(int dim);

/// Volume of the unit ball in R^d.
double unit_ball_volume(int dim);

/// Normalising constant of the Newtonian kernel c0 |x|^{2-d}, c0 = 1/((d-2) ω_d).
double newton_constant(int dim);

// ---------------------------------------------------------------------------
// Scaling contract
// ---------------------------------------------------------------------------

/// Scaling parameters of one particle system: N ε^{d-2} = Z.
struct SimParams {
  int dim = 3;
  double big_z = 1.0;
  std::int64_t n_particles = 1;
  double epsilon = 1.0;  ///< interaction range
  double tau = 0.05;     ///< micro time step
  double horizon = 0.0;  ///< T
  std::uint64_t seed = 0;
};

/// Default ratio τ/ε².
inline constexpr double kDefaultTauFactor = 0.05;

/// Builds parameters with ε = (Z/N)^{1/(d-2)} and τ = tau_factor·ε².
SimParams build_params(int dim, double big_z, std::int64_t n_particles,
                       double tau_factor = kDefaultTauFactor);

/// Throws ModelError if any SimParams invariant is broken.
void validate(const SimParams& params);

// ---------------------------------------------------------------------------
// Interaction kernel V
// ---------------------------------------------------------------------------

/// Nonnegative continuous interaction kernel with compact support in the ball
/// of radius `support_radius`. Radial kernels carry a profile v(|x|); general
/// kernels a profile V(x).
class KernelV {
 public:
  using RadialProfile = std::function<double(double)>;
  using GeneralProfile = std::function<double(std::span<const double>)>;

  static KernelV radial(int dim, double support_radius, RadialProfile profile,
                        std::string name = "radial");
  static KernelV general(int dim, double support_radius, GeneralProfile profile,
                         std::string name = "general");

  int dim() const { return dim_; }
  double support_radius() const { return support_radius_; }
  bool is_radial() const { return static_cast<bool>(radial_); }
  const std::string& name() const { return name_; }

  /// Quadrature value of ∫V for the current scale.
  double normalization() const { return normalization_; }
  double scale() const { return scale_; }

  /// V(x); zero for |x| >= support_radius.
  double operator()(std::span<const double> x) const;
  /// v(r) for radial kernels; zero for r >= support_radius.
  double radial_value(double r) const;

  /// Evaluates V at displacement with squared norm r2 (radial) or at `x`.
  double at(std::span<const double> x, double r2) const;

  /// Same kernel multiplied by `factor`.
  KernelV scaled(double factor) const;

 private:
  friend KernelV kernel_normalize(const KernelV& kernel);

  int dim_ = 3;
  double support_radius_ = 1.0;
  double scale_ = 1.0;
  double normalization_ = 0.0;
  std::string name_;
  RadialProfile radial_;
  GeneralProfile general_;
};

/// Integral of a kernel profile under the module quadrature (adaptive
/// Gauss-Kronrod in r for radial kernels, fine midpoint grid otherwise).
double kernel_integral(const KernelV& kernel);

/// Rescales the kernel so that its quadrature integral is 1. Rejects profiles
/// with negative samples or zero mass.
KernelV kernel_normalize(const KernelV& kernel);

/// V(x) (0 outside the support).
double kernel_eval(const KernelV& kernel, std::span<const double> x);

/// Closed-form kernel shapes understood by the configuration layer.
struct KernelSpec {
  std::string shape = "plateau";  ///< bump | plateau | quadratic | cone | ellipsoid
  double support_radius = 1.0;
  double edge_width = 0.02;       ///< plateau: width of the smooth edge
  std::vector<double> axes;       ///< ellipsoid: semi-axes (<= support_radius)
};

/// Builds and normalises a kernel from its closed-form description.
KernelV make_kernel(int dim, const KernelSpec& spec);

/// C-infinity step that is 1 on (-inf,0] and 0 on [1,inf).
double smooth_step_down(double t);

// ---------------------------------------------------------------------------
// Rate and diffusion policies
// ---------------------------------------------------------------------------

/// Microscopic coagulation strengths α(n,m).
class RatePolicy {
 public:
  struct Constant { double c; };
  struct Product { double c; };
  struct Table { std::vector<std::vector<double>> values; };

  static RatePolicy constant(double c);
  static RatePolicy product(double c);
  /// Rejects tables that are not square, symmetric or nonnegative.
  static RatePolicy table(std::vector<std::vector<double>> values);

  /// Masses beyond a table's range use the nearest stored entry.
  double operator()(std::int64_t n, std::int64_t m) const;

  const std::variant<Constant, Product, Table>& form() const { return form_; }
  std::string kind() const;

  /// Pairwise symmetry check over 1 <= n,m <= m_max.
  bool is_symmetric(int m_max) const;

 private:
  explicit RatePolicy(std::variant<Constant, Product, Table> form)
      : form_(std::move(form)) {}
  std::variant<Constant, Product, Table> form_;
};

/// d(n): one half of the diffusion rate of a mass-n particle, so the
/// per-coordinate displacement variance over time t is 2 d(n) t.
class DiffusionPolicy {
 public:
  struct Constant { double c; };
  struct Power { double c; double exponent; };        ///< c n^p
  struct Exponential { double c; double base; };      ///< c base^n
  struct Table { std::vector<double> values; };

  static DiffusionPolicy constant(double c);
  static DiffusionPolicy power(double c, double exponent);
  static DiffusionPolicy exponential(double c, double base);
  static DiffusionPolicy table(std::vector<double> values);

  double operator()(std::int64_t n) const;

  const std::variant<Constant, Power, Exponential, Table>& form() const {
    return form_;
  }
  std::string kind() const;

 private:
  explicit DiffusionPolicy(std::variant<Constant, Power, Exponential, Table> f)
      : form_(std::move(f)) {}
  std::variant<Constant, Power, Exponential, Table> form_;
};

// ---------------------------------------------------------------------------
// Initial densities h_n
// ---------------------------------------------------------------------------

struct UniformBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct IsotropicGaussian {
  std::vector<double> center;
  double sigma = 1.0;
};

/// Nodal values of h_n on a uniform grid; multilinear between nodes,
/// integrated with the trapezoidal rule.
struct GridTable {
  std::vector<double> origin;
  double spacing = 1.0;
  std::vector<int> nodes;  ///< nodes per axis (>= 2)
  std::vector<double> values;
};

using DensityShape = std::variant<UniformBox, IsotropicGaussian, GridTable>;

struct DensityComponent {
  std::int64_t mass = 1;
  DensityShape shape;
  /// ∫h_n. For GridTable it is recomputed from the table by trapezoids.
  double intensity = 1.0;
};

/// The family {h_n}; intensities sum to Z.
class InitialDensities {
 public:
  explicit InitialDensities(std::vector<DensityComponent> components);

  const std::vector<DensityComponent>& components() const { return components_; }
  double total_intensity() const;        ///< Z = Σ ∫h_n
  double total_mass_intensity() const;   ///< ∫k = Σ n ∫h_n
  int dim() const;

  /// h_n(x) summed over components of mass n. With a positive `torus_side`
  /// the density is periodised over nearest images.
  double density(std::int64_t mass, std::span<const double> x,
                 double torus_side = 0.0) const;

 private:
  std::vector<DensityComponent> components_;
};

/// Trapezoidal integral of a grid table.
double grid_table_integral(const GridTable& table);

// ---------------------------------------------------------------------------
// Parameter hypothesis
// ---------------------------------------------------------------------------

struct HypothesisReport {
  bool holds = true;
  std::array<std::int64_t, 3> worst_triple{1, 1, 1};
  double worst_ratio = 0.0;  ///< max LHS/RHS over the checked triples
};

/// Evaluates the growth hypothesis
///   n2 γ(n1,n2+n3) max{1, R^{(3d-2)/2}, R^{2d-1}} <= (n2+n3) γ(n1,n2),
///   R = d(n2+n3)/d(n2),
/// for 1 <= n1 <= m_max and n2+n3 <= m_max. Ties keep the lexicographically
/// first triple.
HypothesisReport check_hypothesis(int dim, const RatePolicy& gamma,
                                  const DiffusionPolicy& dd, int m_max);

}  // namespace coag
