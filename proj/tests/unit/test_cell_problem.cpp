#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "coag/cell_problem.hpp"

using namespace coag;

namespace {

constexpr double kPi = std::numbers::pi;

const KernelV& bump() {
  static const KernelV v = make_kernel(3, {"bump", 1.0});
  return v;
}

const KernelV& plateau() {
  static const KernelV v = make_kernel(3, {"plateau", 1.0, 0.02});
  return v;
}

std::shared_ptr<const CellGrid> radial(const KernelV& v, int shells = kDefaultShells) {
  return std::make_shared<const CellGrid>(make_radial_grid(v, shells));
}

// Newtonian potential of a radial density g in d=3 by Newton's theorem:
// (1/r)∫_0^r g s^2 ds + ∫_r^1 g s ds.
template <class G>
double radial_potential(G&& g, double r) {
  boost::math::quadrature::tanh_sinh<double> ts;
  double inner = 0.0, outer = 0.0;
  const double rin = std::min(r, 1.0);
  if (rin > 0.0) inner = ts.integrate([&](double s) { return g(s) * s * s; }, 0.0, rin) / r;
  if (r < 1.0) outer = ts.integrate([&](double s) { return g(s) * s; }, r, 1.0);
  return inner + outer;
}

}  // namespace

TEST(NewtonianConvolve, ZeroDensity) {
  const auto g = radial(bump(), 100);
  const std::vector<double> f(g->size(), 0.0);
  for (double r : {0.0, 0.5, 3.0}) {
    const std::array<double, 3> x{r, 0.0, 0.0};
    EXPECT_EQ(newtonian_convolve(*g, f, x), 0.0);
  }
}

TEST(NewtonianConvolve, UniformBallNewtonValue) {
  const auto g = radial(bump(), 200);
  const std::vector<double> f(g->size(), 1.0);
  const std::array<double, 3> x{0.0, 2.0, 0.0};
  EXPECT_NEAR(newtonian_convolve(*g, f, x), 1.0 / 6.0, 1e-12);
  // Interior value of the uniform ball: (3 - r^2)/6.
  const std::array<double, 3> y{0.0, 0.0, 0.0};
  EXPECT_NEAR(newtonian_convolve(*g, f, y), 0.5, 1e-4);
}

TEST(NewtonianConvolve, SingleCellIsOneTerm) {
  CellGrid g;
  g.mode = GridMode::cartesian;
  g.dim = 3;
  g.spacing = 0.1;
  g.cells_per_axis = 1;
  g.nodes = {0.0, 0.0, 0.0};
  g.weights = {1e-3};
  g.v_values = {1.0};
  g.cell_index = {std::array<int, kMaxDim>{}};
  const std::vector<double> f{2.0};
  const std::array<double, 3> x{0.0, 0.0, 0.5};
  EXPECT_NEAR(newtonian_convolve(g, f, x), newton_constant(3) * 1e-3 * 2.0 / 0.5, 1e-15);
}

TEST(CellGrid, WeightsCoverSupportVolume) {
  const auto g = radial(bump());
  EXPECT_NEAR(g->total_weight(), 4.0 * kPi / 3.0, 1e-6 * 4.0 * kPi / 3.0);
  const CellGrid c = make_cartesian_grid(bump(), 16);
  EXPECT_NEAR(c.total_weight(), 4.0 * kPi / 3.0, 1e-6 * 4.0 * kPi / 3.0);
  for (double w : c.weights) EXPECT_GT(w, 0.0);
}

TEST(CellProblem, ZeroCouplingIsTrivial) {
  const auto sol = solve_cell_problem(bump(), 0.0, radial(bump(), 100));
  for (double u : sol.u_values) EXPECT_EQ(u, 0.0);
  EXPECT_EQ(sol.residual, 0.0);
  EXPECT_EQ(eval_u(sol, 3.0), 0.0);
}

TEST(CellProblem, BoundsResidualAndDecay) {
  const auto g = radial(bump());
  for (double ap : {1e-3, 1.0, 10.0, 1e3}) {
    const auto sol = solve_cell_problem(bump(), ap, g);
    const auto [lo, hi] = std::minmax_element(sol.u_values.begin(), sol.u_values.end());
    EXPECT_GE(*lo, -1.0 - 1e-9) << ap;
    EXPECT_LE(*hi, 1e-9) << ap;
    EXPECT_LE(sol.residual, 1e-8) << ap;
    // Outside the support u(r) = -c0 α' ∫V(1+u) / r exactly.
    const double c = newton_constant(3) * sol.f_value;
    for (double r : {2.0, 4.0, 8.0, 1e3}) {
      const double u = eval_u(sol, r);
      EXPECT_LE(u, 0.0);
      EXPECT_LE(std::abs(u), c / r * (1.0 + 1e-9)) << "r=" << r;
      EXPECT_NEAR(u * r, -c, 1e-9 * c) << "r=" << r;
    }
  }
}

TEST(CellProblem, TwoTermNeumannSeries) {
  const double ap = 1e-3;
  const auto sol = solve_cell_problem(bump(), ap, radial(bump()));
  auto v = [](double s) { return bump().radial_value(s); };
  auto gamma = [&](double r) { return radial_potential(v, r); };
  auto second = [&](double r) { return radial_potential([&](double s) { return v(s) * gamma(s); }, r); };
  for (double r : {0.0, 0.3, 0.7, 2.0}) {
    const double oracle = -ap * gamma(r) + ap * ap * second(r);
    EXPECT_NEAR(eval_u(sol, r), oracle, 2e-4 * ap * gamma(r)) << "r=" << r;
  }
}

TEST(CellProblem, EvalMatchesNodesOnGrid) {
  const auto sol = solve_cell_problem(bump(), 5.0, radial(bump()));
  const auto& g = *sol.grid;
  for (std::size_t i = 0; i < g.size(); i += 37) {
    EXPECT_NEAR(eval_u(sol, g.node(i)[0]), sol.u_values[i], 1e-8);
  }
}

TEST(CellProblem, GridConvergenceRatio) {
  std::vector<double> f;
  for (int shells : {50, 100, 200, 400}) {
    f.push_back(solve_cell_problem(bump(), 1.0, radial(bump(), shells)).f_value);
  }
  const double d1 = std::abs(f[1] - f[0]), d2 = std::abs(f[2] - f[1]), d3 = std::abs(f[3] - f[2]);
  EXPECT_LE(d2 / d1, 0.6);
  EXPECT_LE(d3 / d2, 0.6);
}

TEST(CellProblem, CartesianAgreesWithRadial) {
  auto cart = std::make_shared<const CellGrid>(make_cartesian_grid(bump(), 24));
  const auto sc = solve_cell_problem(bump(), 1.0, cart);
  const auto sr = solve_cell_problem(bump(), 1.0, radial(bump()));
  EXPECT_LE(sc.residual, 1e-8);
  EXPECT_NEAR(sc.f_value, sr.f_value, 0.01 * sr.f_value);
  for (double u : sc.u_values) {
    EXPECT_GE(u, -1.0 - 1e-9);
    EXPECT_LE(u, 1e-9);
  }
}

TEST(CellProblem, CartesianGeneralKernel) {
  const KernelV v = make_kernel(3, {"ellipsoid", 1.0, 0.02, {1.0, 0.5, 0.75}});
  auto g = std::make_shared<const CellGrid>(make_cartesian_grid(v, 20));
  const auto sol = solve_cell_problem(v, 10.0, g);
  EXPECT_LE(sol.residual, 1e-8);
  EXPECT_GT(sol.f_value, 0.0);
  EXPECT_LE(sol.f_value, capacity_of_support(v).value + 1e-6);
}

TEST(ComputeBeta, ZeroRate) {
  const auto r = compute_beta(1, 1, bump(), RatePolicy::constant(0.0),
                              DiffusionPolicy::constant(0.5), radial(bump(), 100));
  EXPECT_EQ(r.beta, 0.0);
}

TEST(ComputeBeta, SmallRateNeumannOracle) {
  const double alpha = 1e-4;
  const auto r = compute_beta(1, 1, bump(), RatePolicy::constant(alpha),
                              DiffusionPolicy::constant(0.5), radial(bump()));
  auto v = [](double s) { return bump().radial_value(s); };
  boost::math::quadrature::tanh_sinh<double> ts;
  const double vgamma = 4.0 * kPi * ts.integrate(
      [&](double s) { return s * s * v(s) * radial_potential(v, s); }, 0.0, 1.0);
  const double oracle = alpha * (1.0 - alpha * vgamma);
  EXPECT_NEAR(r.beta, oracle, 1e-9 * alpha);
  EXPECT_LT(r.beta, alpha);
}

TEST(ComputeBeta, LargeRateApproachesCapacity) {
  const auto r = compute_beta(1, 1, plateau(), RatePolicy::constant(1e4),
                              DiffusionPolicy::constant(0.5), radial(plateau()));
  EXPECT_NEAR(r.beta, 4.0 * kPi, 0.05 * 4.0 * kPi);
  EXPECT_LE(r.beta, 4.0 * kPi + 1e-6);
}

TEST(ComputeBeta, SymmetricAndBounded) {
  const auto g = radial(bump(), 200);
  const auto alpha = RatePolicy::product(3.0);
  const auto dd = DiffusionPolicy::power(1.0, -0.5);
  const double cap = capacity_of_support(bump()).value;
  for (int n = 1; n <= 4; ++n) {
    for (int m = n; m <= 4; ++m) {
      const auto a = compute_beta(n, m, bump(), alpha, dd, g);
      const auto b = compute_beta(m, n, bump(), alpha, dd, g);
      EXPECT_NEAR(a.beta, b.beta, 1e-10);
      EXPECT_GE(a.beta, 0.0);
      EXPECT_LE(a.beta, alpha(n, m));
      EXPECT_LE(a.beta, (dd(n) + dd(m)) * cap + 1e-6);
    }
  }
}

TEST(EffectiveRateCurve, MonotoneAndCapped) {
  const std::vector<double> alphas{0.0, 1.0, 10.0, 100.0, 1e3, 1e4};
  const auto curve = effective_rate_curve(plateau(), 1.0, alphas, radial(plateau()));
  ASSERT_EQ(curve.size(), alphas.size());
  EXPECT_EQ(curve[0].f, 0.0);
  const double cap = capacity_unit_ball(3);
  for (std::size_t k = 1; k < curve.size(); ++k) {
    EXPECT_GE(curve[k].f, curve[k - 1].f - 1e-8);
    EXPECT_LE(curve[k].f, cap + 1e-6);
  }
  EXPECT_GE(curve.back().f, 0.95 * cap);
}

TEST(Capacity, ClosedForms) {
  EXPECT_NEAR(capacity_unit_ball(3), 4.0 * kPi, 1e-12);
  EXPECT_NEAR(capacity_unit_ball(4), 2.0 * 2.0 * kPi * kPi, 1e-12);
  const KernelV wide = make_kernel(3, {"bump", 2.0});
  EXPECT_NEAR(capacity_of_support(wide).value, 8.0 * kPi, 1e-12);
  EXPECT_LE(capacity_of_support(bump()).value, capacity_of_support(wide).value);
}

TEST(Capacity, LargeCouplingCrossCheck) {
  const auto curve = effective_rate_curve(plateau(), 1.0, {1e6}, radial(plateau()));
  EXPECT_NEAR(curve[0].f, capacity_unit_ball(3), 0.02 * capacity_unit_ball(3));
}
