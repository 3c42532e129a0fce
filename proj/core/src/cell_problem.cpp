#include "coag/cell_problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>

namespace coag {

std::span<const double> CellGrid::node(std::size_t i) const {
  if (mode == GridMode::radial) return {nodes.data() + i, 1};
  return {nodes.data() + i * dim, static_cast<std::size_t>(dim)};
}

double CellGrid::total_weight() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

int default_cells_per_axis(int dim) {
  if (dim <= 3) return 32;
  return std::max(8, static_cast<int>(std::floor(std::pow(32768.0, 1.0 / dim))));
}

CellGrid make_radial_grid(const KernelV& v, int shells) {
  if (!v.is_radial()) throw CellProblemError("radial grid needs a radial kernel");
  if (shells < 2) throw CellProblemError("radial grid needs >= 2 shells");
  const int d = v.dim();
  const double R = v.support_radius();
  CellGrid g;
  g.mode = GridMode::radial;
  g.dim = d;
  g.support_radius = R;
  g.spacing = R / shells;
  g.edges.resize(shells + 1);
  for (int k = 0; k <= shells; ++k) g.edges[k] = R * k / shells;
  const double area = unit_sphere_area(d);
  using Gauss = boost::math::quadrature::gauss<double, 10>;
  for (int k = 0; k < shells; ++k) {
    const double a = g.edges[k];
    const double b = g.edges[k + 1];
    const double shell = (std::pow(b, d) - std::pow(a, d)) / d;
    const double mass = Gauss::integrate(
        [&](double s) { return v.radial_value(s) * std::pow(s, d - 1); }, a, b);
    g.nodes.push_back(0.5 * (a + b));
    g.weights.push_back(area * shell);
    g.v_values.push_back(mass / shell);
  }
  return g;
}

CellGrid make_cartesian_grid(const KernelV& v, int cells_per_axis) {
  const int d = v.dim();
  const int n = cells_per_axis > 0 ? cells_per_axis : default_cells_per_axis(d);
  const double R = v.support_radius();
  const double h = 2.0 * R / n;
  const int sub = d <= 3 ? 4 : 2;
  std::size_t sub_total = 1;
  for (int a = 0; a < d; ++a) sub_total *= sub;

  CellGrid g;
  g.mode = GridMode::cartesian;
  g.dim = d;
  g.support_radius = R;
  g.spacing = h;
  g.cells_per_axis = n;

  std::array<int, kMaxDim> idx{};
  std::array<int, kMaxDim> sidx{};
  std::array<double, kMaxDim> y{};
  const double cell_volume = std::pow(h, d);
  while (true) {
    std::size_t inside = 0;
    double vsum = 0.0;
    sidx.fill(0);
    while (true) {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        y[a] = -R + (idx[a] + (sidx[a] + 0.5) / sub) * h;
        r2 += y[a] * y[a];
      }
      if (r2 < R * R) {
        ++inside;
        vsum += v.at(std::span<const double>(y.data(), d), r2);
      }
      int a = 0;
      while (a < d && ++sidx[a] == sub) sidx[a++] = 0;
      if (a == d) break;
    }
    if (inside > 0) {
      for (int a = 0; a < d; ++a) g.nodes.push_back(-R + (idx[a] + 0.5) * h);
      g.weights.push_back(cell_volume * static_cast<double>(inside) / sub_total);
      g.v_values.push_back(vsum / static_cast<double>(inside));
      g.cell_index.push_back(idx);
    }
    int a = 0;
    while (a < d && ++idx[a] == n) idx[a++] = 0;
    if (a == d) break;
  }
  const double exact = unit_ball_volume(d) * std::pow(R, d);
  const double factor = exact / g.total_weight();
  for (double& w : g.weights) w *= factor;
  return g;
}

CellGrid make_grid(const KernelV& v) {
  return v.is_radial() ? make_radial_grid(v) : make_cartesian_grid(v);
}

namespace {

/// c0 ω_d ∫_a^b s^{d-1} max(r,s)^{2-d} ds: potential at radius r of the
/// uniform unit-density shell [a,b].
double shell_potential(int d, double r, double a, double b) {
  double value = 0.0;
  if (r > a) {
    const double top = std::min(b, r);
    value += std::pow(r, 2 - d) * (std::pow(top, d) - std::pow(a, d)) / d;
  }
  if (r < b) {
    const double bottom = std::max(a, r);
    value += 0.5 * (b * b - bottom * bottom);
  }
  return value / (d - 2);
}

/// Cartesian kernel per unit of (w / h^d): uniform-ball potential of one
/// full cell near the node, point kernel beyond the equal-volume radius.
struct CartesianKernel {
  int d;
  double h;
  double a;
  double c0;
  double cell_volume;

  explicit CartesianKernel(const CellGrid& g)
      : d(g.dim),
        h(g.spacing),
        a(g.spacing * std::pow(1.0 / unit_ball_volume(g.dim), 1.0 / g.dim)),
        c0(newton_constant(g.dim)),
        cell_volume(std::pow(g.spacing, g.dim)) {}

  double operator()(double r2) const {
    if (r2 < a * a) return a * a / (2.0 * (d - 2)) - r2 / (2.0 * d);
    return cell_volume * c0 * std::pow(r2, 0.5 * (2 - d));
  }
};

double radial_norm(std::span<const double> x) {
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  return std::sqrt(r2);
}

/// Zero-padded FFT convolution with the cartesian kernel over the full
/// cells_per_axis^d lattice.
class FftConvolver {
 public:
  explicit FftConvolver(const CellGrid& g) {
    const int d = g.dim;
    const int n = g.cells_per_axis;
    padded_ = 2 * n;
    dims_.assign(d, padded_);
    real_size_ = 1;
    for (int a = 0; a < d; ++a) real_size_ *= static_cast<std::size_t>(padded_);
    complex_size_ = real_size_ / padded_ * (padded_ / 2 + 1);
    real_ = fftw_alloc_real(real_size_);
    spec_ = fftw_alloc_complex(complex_size_);
    kernel_spec_ = fftw_alloc_complex(complex_size_);
    forward_ = fftw_plan_dft_r2c(d, dims_.data(), real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(d, dims_.data(), spec_, real_, FFTW_ESTIMATE);

    const CartesianKernel kern(g);
    std::vector<int> idx(d, 0);
    for (std::size_t k = 0; k < real_size_; ++k) {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const int off = idx[d - 1 - a] < n ? idx[d - 1 - a] : idx[d - 1 - a] - padded_;
        r2 += (off * g.spacing) * (off * g.spacing);
      }
      real_[k] = kern(r2);
      int a = d - 1;
      while (a >= 0 && ++idx[a] == padded_) idx[a--] = 0;
    }
    fftw_execute(forward_);
    std::memcpy(kernel_spec_, spec_, sizeof(fftw_complex) * complex_size_);

    flat_.reserve(g.size());
    for (const auto& ci : g.cell_index) {
      std::size_t flat = 0;
      for (int a = d - 1; a >= 0; --a) flat = flat * padded_ + ci[a];
      flat_.push_back(flat);
    }
  }

  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;

  ~FftConvolver() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
    fftw_free(kernel_spec_);
  }

  /// out_i = Σ_j g(x_i - x_j) q_j over all grid nodes.
  void apply(const std::vector<double>& q, std::vector<double>& out) {
    std::fill(real_, real_ + real_size_, 0.0);
    for (std::size_t j = 0; j < q.size(); ++j) real_[flat_[j]] = q[j];
    fftw_execute(forward_);
    for (std::size_t k = 0; k < complex_size_; ++k) {
      const double ar = spec_[k][0], ai = spec_[k][1];
      const double br = kernel_spec_[k][0], bi = kernel_spec_[k][1];
      spec_[k][0] = ar * br - ai * bi;
      spec_[k][1] = ar * bi + ai * br;
    }
    fftw_execute(backward_);
    const double scale = 1.0 / static_cast<double>(real_size_);
    out.resize(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = real_[flat_[i]] * scale;
  }

 private:
  int padded_ = 0;
  std::vector<int> dims_;
  std::size_t real_size_ = 0;
  std::size_t complex_size_ = 0;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_complex* kernel_spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
  std::vector<std::size_t> flat_;
};

constexpr std::size_t kDenseLimit = 2000;

void solve_radial(const CellGrid& g, double ap, CellSolution& sol) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      a(i, j) = ap * shell_potential(g.dim, g.nodes[i], g.edges[j], g.edges[j + 1]) *
                g.v_values[j];
    }
  }
  Eigen::VectorXd b = -a.rowwise().sum();
  a.diagonal().array() += 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd u = lu.solve(b);
  u += lu.solve(b - a * u);
  const double residual = (a * u - b).lpNorm<Eigen::Infinity>();
  if (!std::isfinite(residual)) {
    std::ostringstream os;
    os << "radial cell problem solve failed; rcond estimate " << lu.rcond();
    throw CellProblemError(os.str());
  }
  sol.u_values.assign(u.data(), u.data() + n);
  sol.residual = residual;
}

void solve_cartesian_dense(const CellGrid& g, double ap,
                           const std::vector<std::size_t>& active,
                           CellSolution& sol) {
  const CartesianKernel kern(g);
  const double hd = std::pow(g.spacing, g.dim);
  const auto n = static_cast<Eigen::Index>(active.size());
  const int d = g.dim;
  auto dist2 = [&](std::size_t i, std::size_t j) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) {
      const double z = g.nodes[i * d + a] - g.nodes[j * d + a];
      r2 += z * z;
    }
    return r2;
  };
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::size_t jj = active[j];
      a(i, j) = ap * kern(dist2(active[i], jj)) * g.weights[jj] / hd * g.v_values[jj];
    }
  }
  Eigen::VectorXd b = -a.rowwise().sum();
  a.diagonal().array() += 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd u = lu.solve(b);
  u += lu.solve(b - a * u);
  if (!u.allFinite()) {
    std::ostringstream os;
    os << "cartesian cell problem solve failed; rcond estimate " << lu.rcond();
    throw CellProblemError(os.str());
  }
  // Extend to inactive nodes through the integral representation.
  sol.u_values.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::size_t jj = active[j];
      s += kern(dist2(i, jj)) * g.weights[jj] / hd * g.v_values[jj] * (1.0 + u[j]);
    }
    sol.u_values[i] = -ap * s;
  }
  double residual = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    residual = std::max(residual, std::abs(sol.u_values[active[j]] - u[j]));
  }
  sol.residual = std::max(residual, (a * u - b).lpNorm<Eigen::Infinity>());
}

void solve_cartesian_cg(const CellGrid& g, double ap, double tol, CellSolution& sol) {
  const std::size_t n = g.size();
  const double hd = std::pow(g.spacing, g.dim);
  FftConvolver conv(g);
  std::vector<double> dd(n), sq(n);
  for (std::size_t j = 0; j < n; ++j) {
    dd[j] = g.weights[j] / hd * g.v_values[j];
    sq[j] = std::sqrt(dd[j]);
  }
  std::vector<double> tmp(n), out(n);
  conv.apply(dd, out);
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = -ap * out[i];

  // (I + α' S G S) y = S b, S = D^{1/2}, u = b - α' G S y.
  auto op = [&](const std::vector<double>& y, std::vector<double>& res) {
    for (std::size_t j = 0; j < n; ++j) tmp[j] = sq[j] * y[j];
    conv.apply(tmp, res);
    for (std::size_t i = 0; i < n; ++i) res[i] = y[i] + ap * sq[i] * res[i];
  };
  auto recover = [&](const std::vector<double>& y, std::vector<double>& u) {
    for (std::size_t j = 0; j < n; ++j) tmp[j] = sq[j] * y[j];
    conv.apply(tmp, u);
    for (std::size_t i = 0; i < n; ++i) u[i] = b[i] - ap * u[i];
  };
  auto true_residual = [&](const std::vector<double>& u) {
    for (std::size_t j = 0; j < n; ++j) tmp[j] = dd[j] * (1.0 + u[j]);
    conv.apply(tmp, out);
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r = std::max(r, std::abs(u[i] + ap * out[i]));
    return r;
  };

  std::vector<double> y(n, 0.0), r(n), p(n), ap_vec(n), u(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = sq[i] * b[i];
  p = r;
  double rr = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
  const int max_iter = 5000;
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (it < max_iter) {
    if (rr == 0.0) break;
    op(p, ap_vec);
    const double alpha = rr / std::inner_product(p.begin(), p.end(), ap_vec.begin(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += alpha * p[i];
      r[i] -= alpha * ap_vec[i];
    }
    const double rr_new = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    ++it;
    if (it % 5 == 0 || rr_new < 1e-30) {
      recover(y, u);
      residual = true_residual(u);
      if (residual <= 0.1 * tol) break;
    }
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  recover(y, u);
  residual = true_residual(u);
  if (!(residual <= tol)) {
    std::ostringstream os;
    os << "cartesian CG did not reach tol " << tol << " (residual " << residual
       << " after " << it << " iterations)";
    throw CellProblemError(os.str());
  }
  sol.u_values = std::move(u);
  sol.residual = residual;
  sol.iterations = it;
}

double cartesian_potential(const CellGrid& g, std::span<const double> f,
                           std::span<const double> x) {
  const CartesianKernel kern(g);
  const double hd = std::pow(g.spacing, g.dim);
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (f[j] == 0.0) continue;
    double r2 = 0.0;
    for (int a = 0; a < g.dim; ++a) {
      const double z = x[a] - g.nodes[j * g.dim + a];
      r2 += z * z;
    }
    s += kern(r2) * g.weights[j] / hd * f[j];
  }
  return s;
}

}  // namespace

double newtonian_convolve(const CellGrid& grid, std::span<const double> f,
                          std::span<const double> x) {
  if (f.size() != grid.size()) throw CellProblemError("field size does not match grid");
  if (grid.mode == GridMode::radial) {
    const double r = radial_norm(x);
    double s = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (f[j] != 0.0) {
        s += shell_potential(grid.dim, r, grid.edges[j], grid.edges[j + 1]) * f[j];
      }
    }
    return s;
  }
  if (x.size() != static_cast<std::size_t>(grid.dim)) {
    throw CellProblemError("point dimension does not match grid");
  }
  return cartesian_potential(grid, f, x);
}

CellSolution solve_cell_problem(const KernelV& v, double alpha_prime,
                                std::shared_ptr<const CellGrid> grid, double tol) {
  if (!(alpha_prime >= 0.0) || !std::isfinite(alpha_prime)) {
    throw CellProblemError("alpha_prime must be finite and >= 0");
  }
  if (!(tol > 0.0)) throw CellProblemError("tol must be > 0");
  if (!grid) grid = std::make_shared<const CellGrid>(make_grid(v));
  if (grid->dim != v.dim()) throw CellProblemError("grid and kernel dimensions differ");
  const CellGrid& g = *grid;

  CellSolution sol;
  sol.alpha_prime = alpha_prime;
  sol.grid = grid;
  if (alpha_prime == 0.0) {
    sol.u_values.assign(g.size(), 0.0);
  } else if (g.mode == GridMode::radial) {
    solve_radial(g, alpha_prime, sol);
  } else {
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g.v_values[j] > 0.0) active.push_back(j);
    }
    if (active.size() <= kDenseLimit) {
      solve_cartesian_dense(g, alpha_prime, active, sol);
    } else {
      solve_cartesian_cg(g, alpha_prime, tol, sol);
    }
  }
  if (sol.residual > tol) {
    std::ostringstream os;
    os << "cell problem residual " << sol.residual << " exceeds tol " << tol;
    throw CellProblemError(os.str());
  }
  double integral = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    integral += g.weights[j] * g.v_values[j] * (1.0 + sol.u_values[j]);
  }
  sol.integral = integral;
  sol.f_value = alpha_prime * integral;
  return sol;
}

double eval_u(const CellSolution& sol, std::span<const double> x) {
  if (!sol.grid) throw CellProblemError("solution carries no grid");
  if (sol.alpha_prime == 0.0) return 0.0;
  const CellGrid& g = *sol.grid;
  std::vector<double> f(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) f[j] = g.v_values[j] * (1.0 + sol.u_values[j]);
  return -sol.alpha_prime * newtonian_convolve(g, f, x);
}

double eval_u(const CellSolution& sol, double r) {
  if (!sol.grid) throw CellProblemError("solution carries no grid");
  std::array<double, kMaxDim> x{};
  x[0] = r;
  return eval_u(sol, std::span<const double>(x.data(), sol.grid->dim));
}

BetaResult compute_beta(std::int64_t n, std::int64_t m, const KernelV& v,
                        const RatePolicy& alpha, const DiffusionPolicy& dd,
                        std::shared_ptr<const CellGrid> grid, double tol) {
  BetaResult res;
  res.n = n;
  res.m = m;
  res.alpha = alpha(n, m);
  res.alpha_prime = res.alpha / (dd(n) + dd(m));
  if (res.alpha == 0.0) return res;
  const CellSolution sol = solve_cell_problem(v, res.alpha_prime, std::move(grid), tol);
  res.beta = res.alpha * sol.integral;
  res.residual = sol.residual;
  return res;
}

std::vector<RatePoint> effective_rate_curve(const KernelV& v, double dd_sum,
                                            const std::vector<double>& alphas,
                                            std::shared_ptr<const CellGrid> grid,
                                            double tol) {
  if (!(dd_sum > 0.0)) throw CellProblemError("dd_sum must be > 0");
  if (!std::is_sorted(alphas.begin(), alphas.end())) {
    throw CellProblemError("alphas must be sorted ascending");
  }
  if (!grid) grid = std::make_shared<const CellGrid>(make_grid(v));
  std::vector<RatePoint> out;
  out.reserve(alphas.size());
  for (double a : alphas) {
    const double b = a / dd_sum;
    const CellSolution sol = solve_cell_problem(v, b, grid, tol);
    out.push_back({b, sol.f_value, sol.residual});
  }
  return out;
}

double capacity_unit_ball(int dim) {
  if (dim < 3) throw CellProblemError("capacity requires dim >= 3");
  return (dim - 2) * unit_sphere_area(dim);
}

CapacityRef capacity_of_support(const KernelV& v) {
  const double R = v.support_radius();
  return {R == 1.0 ? "unit-ball" : "support",
          capacity_unit_ball(v.dim()) * std::pow(R, v.dim() - 2)};
}

}  // namespace coag
