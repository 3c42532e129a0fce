#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coag/cell_problem.hpp"
#include "coag/model.hpp"

namespace coag {

class MacroError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// β(n,m) for 1 <= n,m <= m_max.
class BetaMatrix {
 public:
  BetaMatrix() = default;
  explicit BetaMatrix(int m_max, double fill = 0.0);

  int m_max() const { return m_max_; }
  double operator()(int n, int m) const { return values_[(n - 1) * m_max_ + (m - 1)]; }
  void set(int n, int m, double v);  ///< sets both (n,m) and (m,n)
  const std::vector<double>& values() const { return values_; }
  bool is_symmetric(double tol = 0.0) const;

 private:
  int m_max_ = 0;
  std::vector<double> values_;
};

/// Solves the cell problem for n <= m and mirrors; identical α' share one solve.
BetaMatrix beta_matrix(int m_max, const KernelV& v, const RatePolicy& alpha,
                       const DiffusionPolicy& dd, std::shared_ptr<const CellGrid> grid = {},
                       double tol = kDefaultCellTol, std::vector<BetaResult>* rows = nullptr);

/// Coefficient on (gain - loss). "printed" uses the operators as written
/// (scale 1); "pair" halves them so that one unordered pair reacts once.
enum class ReactionConvention { pair, printed };

double reaction_scale(ReactionConvention c);
std::string to_string(ReactionConvention c);
ReactionConvention parse_convention(const std::string& s);

enum class MacroMode { homogeneous, spatial };
enum class Boundary { torus, zero_flux };

struct MacroGrid {
  int dim = 3;
  int nodes = 16;          ///< nodes per axis
  double spacing = 1.0;    ///< h_x
  Boundary boundary = Boundary::torus;

  std::size_t size() const;
  /// Cell-centre coordinates of node `flat` (axis 0 fastest), origin at 0.
  std::array<double, kMaxDim> point(std::size_t flat) const;
  double cell_volume() const;
};

struct MassLedger {
  double initial = 0.0;
  double current = 0.0;
  double truncation_flux = 0.0;  ///< cumulative mass carried above m_max
  double clipped = 0.0;          ///< cumulative mass added by clipping negatives to 0
};

struct MacroField {
  MacroMode mode = MacroMode::homogeneous;
  int m_max = kDefaultMassCap;
  std::optional<MacroGrid> grid;
  /// f_n at node k is f[k * m_max + (n - 1)]; one node in homogeneous mode.
  std::vector<double> f;
  double t = 0.0;
  MassLedger ledger;

  std::size_t nodes() const { return grid ? grid->size() : 1; }
  double& at(std::size_t node, int n) { return f[node * m_max + (n - 1)]; }
  double at(std::size_t node, int n) const { return f[node * m_max + (n - 1)]; }
  /// ∫ Σ n f_n (scalar Σ n f_n in homogeneous mode).
  double total_mass() const;
  /// ∫ f_n for n = 1..m_max.
  std::vector<double> mass_totals() const;
};

MacroField make_homogeneous(int m_max, const std::vector<double>& f0);
MacroField make_spatial(int m_max, const MacroGrid& grid,
                        const std::function<double(int, std::span<const double>)>& f0);

struct MacroModel {
  BetaMatrix beta;
  DiffusionPolicy dd = DiffusionPolicy::constant(1.0);
  ReactionConvention convention = ReactionConvention::pair;
};

/// Σ_{m=1}^{n-1} β(m,n-m) f_m f_{n-m}  (f_0 ≡ 0).
double gain(const BetaMatrix& beta, std::span<const double> f, int n);
/// 2 f_n Σ_{m=1}^{m_max} β(m,n) f_m.
double loss(const BetaMatrix& beta, std::span<const double> f, int n);
/// s Σ_{m+k>m_max} (m+k) β(m,k) f_m f_k: mass leaving the truncated system.
double truncation_flux_rate(const BetaMatrix& beta, std::span<const double> f, double scale);

/// Classical RK4 for df_n/dt = s (gain - loss) at every node; a stage more
/// negative than -1e-12 ||f|| triggers recursive halving, and negatives are
/// clipped afterwards with the clipped mass logged.
void step_homogeneous(MacroField& field, const MacroModel& model, double dt);

/// Largest stable explicit diffusion step h^2 / (2 dim max_n d(n)).
double diffusion_dt_limit(const MacroGrid& grid, const DiffusionPolicy& dd, int m_max);

/// Strang splitting: half reaction, explicit diffusion, half reaction.
void step_spatial(MacroField& field, const MacroModel& model, double dt);

struct MacroSnapshot {
  double t = 0.0;
  std::vector<double> f;
  MassLedger ledger;
};

/// Advances to T with step dt (last step shortened) and records snapshots at
/// t = 0, at each observe time and at T.
std::vector<MacroSnapshot> solve(MacroField field, const MacroModel& model, double horizon,
                                 double dt, const std::vector<double>& observe_times = {});

}  // namespace coag
