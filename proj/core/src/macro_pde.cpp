#include "coag/macro_pde.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace coag {

BetaMatrix::BetaMatrix(int m_max, double fill)
    : m_max_(m_max), values_(static_cast<std::size_t>(m_max) * m_max, fill) {
  if (m_max < 1) throw MacroError("m_max must be >= 1");
}

void BetaMatrix::set(int n, int m, double v) {
  values_[(n - 1) * m_max_ + (m - 1)] = v;
  values_[(m - 1) * m_max_ + (n - 1)] = v;
}

bool BetaMatrix::is_symmetric(double tol) const {
  for (int n = 1; n <= m_max_; ++n) {
    for (int m = 1; m < n; ++m) {
      if (std::abs((*this)(n, m) - (*this)(m, n)) > tol) return false;
    }
  }
  return true;
}

BetaMatrix beta_matrix(int m_max, const KernelV& v, const RatePolicy& alpha,
                       const DiffusionPolicy& dd, std::shared_ptr<const CellGrid> grid,
                       double tol, std::vector<BetaResult>* rows) {
  BetaMatrix out(m_max);
  if (!grid) grid = std::make_shared<const CellGrid>(make_grid(v));
  std::map<double, CellSolution> cache;
  for (int n = 1; n <= m_max; ++n) {
    for (int m = n; m <= m_max; ++m) {
      BetaResult r;
      r.n = n;
      r.m = m;
      r.alpha = alpha(n, m);
      r.alpha_prime = r.alpha / (dd(n) + dd(m));
      if (r.alpha > 0.0) {
        auto it = cache.find(r.alpha_prime);
        if (it == cache.end()) {
          it = cache.emplace(r.alpha_prime, solve_cell_problem(v, r.alpha_prime, grid, tol)).first;
        }
        r.beta = r.alpha * it->second.integral;
        r.residual = it->second.residual;
      }
      out.set(n, m, r.beta);
      if (rows) rows->push_back(r);
    }
  }
  return out;
}

double reaction_scale(ReactionConvention c) {
  return c == ReactionConvention::pair ? 0.5 : 1.0;
}

std::string to_string(ReactionConvention c) {
  return c == ReactionConvention::pair ? "pair" : "printed";
}

ReactionConvention parse_convention(const std::string& s) {
  if (s == "pair") return ReactionConvention::pair;
  if (s == "printed") return ReactionConvention::printed;
  throw MacroError("unknown reaction convention '" + s + "' (pair | printed)");
}

std::size_t MacroGrid::size() const {
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(nodes);
  return n;
}

std::array<double, kMaxDim> MacroGrid::point(std::size_t flat) const {
  std::array<double, kMaxDim> x{};
  for (int a = 0; a < dim; ++a) {
    x[a] = (static_cast<double>(flat % static_cast<std::size_t>(nodes)) + 0.5) * spacing;
    flat /= static_cast<std::size_t>(nodes);
  }
  return x;
}

double MacroGrid::cell_volume() const { return std::pow(spacing, dim); }

double MacroField::total_mass() const {
  double s = 0.0;
  for (std::size_t k = 0; k < nodes(); ++k) {
    for (int n = 1; n <= m_max; ++n) s += n * at(k, n);
  }
  return grid ? s * grid->cell_volume() : s;
}

std::vector<double> MacroField::mass_totals() const {
  std::vector<double> out(m_max, 0.0);
  for (std::size_t k = 0; k < nodes(); ++k) {
    for (int n = 1; n <= m_max; ++n) out[n - 1] += at(k, n);
  }
  if (grid) {
    for (double& v : out) v *= grid->cell_volume();
  }
  return out;
}

MacroField make_homogeneous(int m_max, const std::vector<double>& f0) {
  if (m_max < 1) throw MacroError("m_max must be >= 1");
  MacroField field;
  field.mode = MacroMode::homogeneous;
  field.m_max = m_max;
  field.f.assign(m_max, 0.0);
  for (std::size_t n = 0; n < f0.size() && n < static_cast<std::size_t>(m_max); ++n) {
    if (!(f0[n] >= 0.0)) throw MacroError("initial data must be >= 0");
    field.f[n] = f0[n];
  }
  field.ledger.initial = field.ledger.current = field.total_mass();
  return field;
}

MacroField make_spatial(int m_max, const MacroGrid& grid,
                        const std::function<double(int, std::span<const double>)>& f0) {
  if (m_max < 1) throw MacroError("m_max must be >= 1");
  if (grid.nodes < 3) throw MacroError("spatial grid needs >= 3 nodes per axis");
  if (!(grid.spacing > 0.0)) throw MacroError("grid spacing must be > 0");
  MacroField field;
  field.mode = MacroMode::spatial;
  field.m_max = m_max;
  field.grid = grid;
  field.f.assign(grid.size() * m_max, 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.point(k);
    for (int n = 1; n <= m_max; ++n) {
      const double v = f0(n, std::span<const double>(x.data(), grid.dim));
      if (!(v >= 0.0)) throw MacroError("initial data must be >= 0");
      field.at(k, n) = v;
    }
  }
  field.ledger.initial = field.ledger.current = field.total_mass();
  return field;
}

double gain(const BetaMatrix& beta, std::span<const double> f, int n) {
  double s = 0.0;
  for (int m = 1; m < n; ++m) s += beta(m, n - m) * f[m - 1] * f[n - m - 1];
  return s;
}

double loss(const BetaMatrix& beta, std::span<const double> f, int n) {
  const int mm = static_cast<int>(f.size());
  double s = 0.0;
  for (int m = 1; m <= mm; ++m) s += beta(m, n) * f[m - 1];
  return 2.0 * f[n - 1] * s;
}

double truncation_flux_rate(const BetaMatrix& beta, std::span<const double> f, double scale) {
  const int mm = static_cast<int>(f.size());
  double s = 0.0;
  for (int m = 1; m <= mm; ++m) {
    if (f[m - 1] == 0.0) continue;
    for (int k = std::max(1, mm - m + 1); k <= mm; ++k) {
      s += (m + k) * beta(m, k) * f[m - 1] * f[k - 1];
    }
  }
  return scale * s;
}

namespace {

/// Right-hand side of the reaction system plus the flux rate in out[M].
void reaction_rhs(const BetaMatrix& beta, std::span<const double> f, double scale,
                  std::vector<double>& out) {
  const int mm = static_cast<int>(f.size());
  out.assign(mm + 1, 0.0);
  // loss row sums
  for (int n = 1; n <= mm; ++n) {
    const double fn = f[n - 1];
    double g = 0.0;
    for (int m = 1; m < n; ++m) g += beta(m, n - m) * f[m - 1] * f[n - m - 1];
    double l = 0.0;
    if (fn != 0.0) {
      for (int m = 1; m <= mm; ++m) l += beta(m, n) * f[m - 1];
      l *= 2.0 * fn;
    }
    out[n - 1] = scale * (g - l);
  }
  out[mm] = truncation_flux_rate(beta, f, scale);
}

/// RK4 on y = (f, flux) with recursive halving on negative stages.
void rk4_node(const BetaMatrix& beta, double scale, std::vector<double>& y, double dt,
              int depth, std::vector<double> (&work)[5]) {
  const std::size_t mm = y.size() - 1;
  double norm = 0.0;
  for (std::size_t i = 0; i < mm; ++i) norm = std::max(norm, std::abs(y[i]));
  const double floor_value = -1e-12 * norm;

  auto& k1 = work[0];
  auto& k2 = work[1];
  auto& k3 = work[2];
  auto& k4 = work[3];
  auto& tmp = work[4];
  tmp.resize(y.size());
  bool negative = false;
  auto stage = [&](const std::vector<double>& k, double c) {
    for (std::size_t i = 0; i <= mm; ++i) tmp[i] = y[i] + c * k[i];
    for (std::size_t i = 0; i < mm; ++i) negative = negative || tmp[i] < floor_value;
  };
  reaction_rhs(beta, std::span<const double>(y.data(), mm), scale, k1);
  stage(k1, 0.5 * dt);
  reaction_rhs(beta, std::span<const double>(tmp.data(), mm), scale, k2);
  stage(k2, 0.5 * dt);
  reaction_rhs(beta, std::span<const double>(tmp.data(), mm), scale, k3);
  stage(k3, dt);
  reaction_rhs(beta, std::span<const double>(tmp.data(), mm), scale, k4);
  std::vector<double> next(y.size());
  for (std::size_t i = 0; i <= mm; ++i) {
    next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  for (std::size_t i = 0; i < mm; ++i) negative = negative || next[i] < floor_value;
  if (negative && depth < 40) {
    rk4_node(beta, scale, y, 0.5 * dt, depth + 1, work);
    rk4_node(beta, scale, y, 0.5 * dt, depth + 1, work);
    return;
  }
  y.swap(next);
}

/// Advances one node's reaction by dt; returns (flux increment, clipped mass).
std::pair<double, double> react_node(const BetaMatrix& beta, double scale, double* f, int mm,
                                     double dt, std::vector<double>& y,
                                     std::vector<double> (&work)[5]) {
  y.assign(f, f + mm);
  y.push_back(0.0);
  double before = 0.0;
  for (int n = 1; n <= mm; ++n) before += n * f[n - 1];
  rk4_node(beta, scale, y, dt, 0, work);
  // RK4 preserves the linear invariant Σ n f_n + flux up to rounding.
  double after = y[mm];
  for (int n = 1; n <= mm; ++n) after += n * y[n - 1];
  if (std::abs(after - before) > 1e-10 * std::max(before, 1e-300)) {
    std::ostringstream os;
    os.precision(17);
    os << "reaction step changed the node mass from " << before << " to " << after;
    throw MacroError(os.str());
  }
  double clipped = 0.0;
  for (int n = 1; n <= mm; ++n) {
    double v = y[n - 1];
    if (v < 0.0) {
      clipped += -n * v;
      v = 0.0;
    }
    f[n - 1] = v;
  }
  return {y[mm], clipped};
}

void react_field(MacroField& field, const MacroModel& model, double dt) {
  if (model.beta.m_max() < field.m_max) throw MacroError("beta matrix smaller than m_max");
  const double scale = reaction_scale(model.convention);
  BetaMatrix local = model.beta;
  if (local.m_max() != field.m_max) {
    local = BetaMatrix(field.m_max);
    for (int n = 1; n <= field.m_max; ++n) {
      for (int m = 1; m <= field.m_max; ++m) local.set(n, m, model.beta(n, m));
    }
  }
  std::vector<double> y;
  std::vector<double> work[5];
  double flux = 0.0, clipped = 0.0;
  for (std::size_t k = 0; k < field.nodes(); ++k) {
    const auto [df, dc] =
        react_node(local, scale, field.f.data() + k * field.m_max, field.m_max, dt, y, work);
    flux += df;
    clipped += dc;
  }
  const double vol = field.grid ? field.grid->cell_volume() : 1.0;
  field.ledger.truncation_flux += flux * vol;
  field.ledger.clipped += clipped * vol;
}

void diffuse_field(MacroField& field, const DiffusionPolicy& dd, double dt) {
  const MacroGrid& g = *field.grid;
  const int d = g.dim;
  const int n = g.nodes;
  const int mm = field.m_max;
  const double inv_h2 = 1.0 / (g.spacing * g.spacing);
  std::vector<double> next(field.f.size());
  std::vector<double> coef(mm);
  for (int m = 1; m <= mm; ++m) coef[m - 1] = dt * dd(m) * inv_h2;
  std::array<std::size_t, kMaxDim> stride{};
  std::size_t s = static_cast<std::size_t>(mm);
  for (int a = 0; a < d; ++a) {
    stride[a] = s;
    s *= static_cast<std::size_t>(n);
  }
  std::array<int, kMaxDim> idx{};
  const std::size_t total = g.size();
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t base = k * mm;
    for (int m = 0; m < mm; ++m) next[base + m] = field.f[base + m];
    for (int a = 0; a < d; ++a) {
      std::size_t lo, hi;
      if (idx[a] > 0) lo = base - stride[a];
      else lo = g.boundary == Boundary::torus ? base + (n - 1) * stride[a] : base;
      if (idx[a] < n - 1) hi = base + stride[a];
      else hi = g.boundary == Boundary::torus ? base - (n - 1) * stride[a] : base;
      for (int m = 0; m < mm; ++m) {
        next[base + m] +=
            coef[m] * (field.f[lo + m] - 2.0 * field.f[base + m] + field.f[hi + m]);
      }
    }
    int a = 0;
    while (a < d && ++idx[a] == n) idx[a++] = 0;
  }
  field.f.swap(next);
}

}  // namespace

void step_homogeneous(MacroField& field, const MacroModel& model, double dt) {
  if (!(dt > 0.0)) throw MacroError("dt must be > 0");
  react_field(field, model, dt);
  field.t += dt;
  field.ledger.current = field.total_mass();
}

double diffusion_dt_limit(const MacroGrid& grid, const DiffusionPolicy& dd, int m_max) {
  double dmax = 0.0;
  for (int n = 1; n <= m_max; ++n) dmax = std::max(dmax, dd(n));
  return grid.spacing * grid.spacing / (2.0 * grid.dim * dmax);
}

void step_spatial(MacroField& field, const MacroModel& model, double dt) {
  if (!field.grid) throw MacroError("step_spatial needs a spatial field");
  if (!(dt > 0.0)) throw MacroError("dt must be > 0");
  const double limit = diffusion_dt_limit(*field.grid, model.dd, field.m_max);
  if (dt > limit * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds the explicit diffusion limit " << limit;
    throw MacroError(os.str());
  }
  react_field(field, model, 0.5 * dt);
  diffuse_field(field, model.dd, dt);
  react_field(field, model, 0.5 * dt);
  field.t += dt;
  field.ledger.current = field.total_mass();
}

std::vector<MacroSnapshot> solve(MacroField field, const MacroModel& model, double horizon,
                                 double dt, const std::vector<double>& observe_times) {
  if (!(dt > 0.0)) throw MacroError("dt must be > 0");
  if (field.grid) {
    const double limit = diffusion_dt_limit(*field.grid, model.dd, field.m_max);
    if (dt > limit * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "dt = " << dt << " exceeds the explicit diffusion limit " << limit;
      throw MacroError(os.str());
    }
  }
  std::vector<double> stops = observe_times;
  stops.push_back(horizon);
  std::sort(stops.begin(), stops.end());
  std::vector<MacroSnapshot> out;
  out.push_back({field.t, field.f, field.ledger});
  const double t0 = field.t;
  for (double stop : stops) {
    if (stop <= field.t + 1e-14 * (1.0 + std::abs(stop))) {
      if (stop > t0 && (out.empty() || out.back().t != field.t)) {
        out.push_back({field.t, field.f, field.ledger});
      }
      continue;
    }
    const double span = stop - field.t;
    const auto steps = static_cast<std::int64_t>(std::ceil(span / dt - 1e-9));
    const double start = field.t;
    for (std::int64_t k = 1; k <= steps; ++k) {
      const double target = k == steps ? stop : start + static_cast<double>(k) * dt;
      const double h = target - field.t;
      if (field.grid) step_spatial(field, model, h);
      else step_homogeneous(field, model, h);
      field.t = target;
    }
    out.push_back({field.t, field.f, field.ledger});
  }
  return out;
}

}  // namespace coag
