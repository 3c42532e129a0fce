#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "coag/model.hpp"

namespace coag {

class CellProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GridMode { radial, cartesian };

/// Quadrature discretisation of the closed ball of radius C0 carrying V.
///
/// Radial mode: `nodes` are shell midpoints r_i, `edges` the shell radii,
/// `weights` the shell volumes and `v_values` shell averages of V.
/// Cartesian mode: `nodes` holds cell centres (dim doubles per node),
/// `weights` the cell volume fraction inside the ball (renormalised to the
/// exact ball volume) and `v_values` the average of V over the in-ball part.
struct CellGrid {
  GridMode mode = GridMode::radial;
  int dim = 3;
  double support_radius = 1.0;
  double spacing = 0.0;
  int cells_per_axis = 0;                  ///< cartesian only
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> v_values;
  std::vector<double> edges;               ///< radial only, size()+1 entries
  std::vector<std::array<int, kMaxDim>> cell_index;  ///< cartesian only

  std::size_t size() const { return weights.size(); }
  std::span<const double> node(std::size_t i) const;
  double total_weight() const;
};

inline constexpr int kDefaultShells = 400;
inline constexpr double kDefaultCellTol = 1e-8;

/// Default cells per axis for the cartesian grid: 32 in d=3, fewer above.
int default_cells_per_axis(int dim);

CellGrid make_radial_grid(const KernelV& v, int shells = kDefaultShells);
CellGrid make_cartesian_grid(const KernelV& v, int cells_per_axis = 0);
/// Radial grid for radial kernels, cartesian otherwise.
CellGrid make_grid(const KernelV& v);

/// c0 Σ_y w_y |x-y|^{2-d} f(y). Radial grids integrate the piecewise-constant
/// radial profile exactly by Newton's theorem; cartesian grids replace the
/// self-cell by the potential of a uniform ball of the cell's volume.
double newtonian_convolve(const CellGrid& grid, std::span<const double> f,
                          std::span<const double> x);

struct CellSolution {
  double alpha_prime = 0.0;
  std::vector<double> u_values;
  double residual = 0.0;
  double integral = 0.0;   ///< ∫V(1+u)
  double f_value = 0.0;    ///< α'∫V(1+u)
  int iterations = 0;      ///< CG iterations (0 for direct solves)
  std::shared_ptr<const CellGrid> grid;
};

/// Solves u + α' N[V(1+u)] = 0 on the grid nodes, N the Newtonian potential.
CellSolution solve_cell_problem(const KernelV& v, double alpha_prime,
                                std::shared_ptr<const CellGrid> grid,
                                double tol = kDefaultCellTol);

/// Integral representation u(x) = -α' N[V(1+u)](x), valid at any x.
double eval_u(const CellSolution& sol, std::span<const double> x);
/// Radial convenience overload: u at distance r from the origin.
double eval_u(const CellSolution& sol, double r);

struct BetaResult {
  std::int64_t n = 1;
  std::int64_t m = 1;
  double alpha = 0.0;
  double alpha_prime = 0.0;
  double beta = 0.0;
  double residual = 0.0;
};

/// β(n,m) = α(n,m)∫V(1+u) with α' = α/(d(n)+d(m)).
BetaResult compute_beta(std::int64_t n, std::int64_t m, const KernelV& v,
                        const RatePolicy& alpha, const DiffusionPolicy& dd,
                        std::shared_ptr<const CellGrid> grid,
                        double tol = kDefaultCellTol);

struct RatePoint {
  double beta_param = 0.0;
  double f = 0.0;
  double residual = 0.0;
};

/// F(b) = b∫V(1+u^b) for each coupling b; `dd_sum` scales the coupling
/// (b = alpha/dd_sum) and is 1 for the plain curve.
std::vector<RatePoint> effective_rate_curve(const KernelV& v, double dd_sum,
                                            const std::vector<double>& alphas,
                                            std::shared_ptr<const CellGrid> grid,
                                            double tol = kDefaultCellTol);

/// Newtonian capacity of the closed unit ball: (d-2) ω_d.
double capacity_unit_ball(int dim);

struct CapacityRef {
  std::string set_descriptor;  ///< "unit-ball" or "support"
  double value = 0.0;
};

/// Capacity of the ball of radius C0 enclosing supp V: (d-2) ω_d C0^{d-2}.
CapacityRef capacity_of_support(const KernelV& v);

}  // namespace coag
