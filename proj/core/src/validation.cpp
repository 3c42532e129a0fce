#include "coag/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "coag/rng.hpp"

namespace coag {

namespace {

double wrap_delta(double z, double side) {
  if (side > 0.0) {
    z = std::remainder(z, side);
  }
  return z;
}

double center_at(const std::vector<double>& c, int a) {
  return a < static_cast<int>(c.size()) ? c[a] : 0.0;
}

}  // namespace

TestFunctional TestFunctional::constant(double c) {
  TestFunctional j;
  j.kind = Kind::constant;
  j.amplitude = c;
  return j;
}

TestFunctional TestFunctional::gaussian(std::vector<double> center, double sigma,
                                        double amplitude) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian width must be > 0");
  TestFunctional j;
  j.kind = Kind::gaussian;
  j.center = std::move(center);
  j.width = sigma;
  j.amplitude = amplitude;
  return j;
}

TestFunctional TestFunctional::box(std::vector<double> center, double half_side, double edge,
                                   double amplitude) {
  if (!(half_side > 0.0) || !(edge > 0.0)) throw ValidationError("box sizes must be > 0");
  TestFunctional j;
  j.kind = Kind::box;
  j.center = std::move(center);
  j.width = half_side;
  j.edge = edge;
  j.amplitude = amplitude;
  return j;
}

TestFunctional TestFunctional::cosine(int axis, double period, double offset, double amplitude) {
  if (axis < 0 || axis >= kMaxDim) throw ValidationError("cosine axis out of range");
  if (!(period > 0.0)) throw ValidationError("cosine period must be > 0");
  TestFunctional j;
  j.kind = Kind::cosine;
  j.axis = axis;
  j.period = period;
  j.offset = offset;
  j.amplitude = amplitude;
  return j;
}

double TestFunctional::operator()(std::span<const double> x) const {
  switch (kind) {
    case Kind::constant:
      return amplitude;
    case Kind::gaussian: {
      double r2 = 0.0;
      for (std::size_t a = 0; a < x.size(); ++a) {
        const double z = wrap_delta(x[a] - center_at(center, static_cast<int>(a)), torus_side);
        r2 += z * z;
      }
      return amplitude * std::exp(-0.5 * r2 / (width * width));
    }
    case Kind::box: {
      double v = amplitude;
      for (std::size_t a = 0; a < x.size(); ++a) {
        const double z = wrap_delta(x[a] - center_at(center, static_cast<int>(a)), torus_side);
        v *= smooth_step_down((std::abs(z) - width) / edge);
      }
      return v;
    }
    case Kind::cosine:
      return offset + amplitude * std::cos(2.0 * std::numbers::pi * x[axis] / period);
  }
  return 0.0;
}

double TestFunctional::sup_norm() const {
  switch (kind) {
    case Kind::cosine:
      return std::abs(offset) + std::abs(amplitude);
    default:
      return std::abs(amplitude);
  }
}

std::string TestFunctional::describe() const {
  std::ostringstream os;
  os << to_string(kind) << "(amplitude=" << amplitude;
  if (kind == Kind::gaussian) os << ", sigma=" << width;
  if (kind == Kind::box) os << ", half_side=" << width << ", edge=" << edge;
  if (kind == Kind::cosine) os << ", axis=" << axis << ", period=" << period << ", offset=" << offset;
  os << ")";
  return os.str();
}

TestFunctional::Kind parse_functional_kind(const std::string& s) {
  if (s == "constant") return TestFunctional::Kind::constant;
  if (s == "gaussian") return TestFunctional::Kind::gaussian;
  if (s == "box") return TestFunctional::Kind::box;
  if (s == "cosine") return TestFunctional::Kind::cosine;
  throw ValidationError("unknown test functional '" + s + "' (constant | gaussian | box | cosine)");
}

std::string to_string(TestFunctional::Kind k) {
  switch (k) {
    case TestFunctional::Kind::constant: return "constant";
    case TestFunctional::Kind::gaussian: return "gaussian";
    case TestFunctional::Kind::box: return "box";
    case TestFunctional::Kind::cosine: return "cosine";
  }
  return "?";
}

namespace {

template <class F>
double midpoint_torus(int dim, double side, int nodes, F&& f) {
  if (dim < 1 || dim > kMaxDim) throw ValidationError("dimension out of range");
  if (!(side > 0.0) || nodes < 1) throw ValidationError("torus quadrature needs L > 0");
  const double h = side / nodes;
  std::array<int, kMaxDim> k{};
  std::array<double, kMaxDim> x{};
  double sum = 0.0;
  while (true) {
    for (int a = 0; a < dim; ++a) x[a] = (k[a] + 0.5) * h;
    sum += f(std::span<const double>(x.data(), dim));
    int a = 0;
    while (a < dim && ++k[a] == nodes) k[a++] = 0;
    if (a == dim) break;
  }
  return sum * std::pow(h, dim);
}

}  // namespace

double torus_integral(const TestFunctional& j, int dim, double side, int nodes) {
  if (j.kind == TestFunctional::Kind::constant) return j.amplitude * std::pow(side, dim);
  return midpoint_torus(dim, side, nodes, [&](std::span<const double> x) { return j(x); });
}

double reference_integral(const InitialDensities& h, std::int64_t n, const TestFunctional& j,
                          double side, int nodes) {
  return midpoint_torus(h.dim(), side, nodes, [&](std::span<const double> x) {
    return j(x) * h.density(n, x, side);
  });
}

double micro_functional(const Configuration& cfg, std::int64_t n, const TestFunctional& j) {
  double s = 0.0;
  for (const auto& p : cfg.particles) {
    if (p.mass == n) s += j(std::span<const double>(p.pos.data(), cfg.dim));
  }
  return std::pow(cfg.epsilon, cfg.dim - 2) * s;
}

double macro_functional(const MacroField& layout, std::span<const double> f, std::int64_t n,
                        const TestFunctional& j, int dim, double torus_side) {
  if (n < 1 || n > layout.m_max) return 0.0;
  if (!layout.grid) {
    if (!(torus_side > 0.0)) throw ValidationError("homogeneous comparison needs a torus side");
    return f[n - 1] * torus_integral(j, dim, torus_side);
  }
  const MacroGrid& g = *layout.grid;
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto x = g.point(k);
    s += j(std::span<const double>(x.data(), g.dim)) * f[k * layout.m_max + (n - 1)];
  }
  return s * g.cell_volume();
}

ComparisonRow compare_values(std::span<const double> micro_values, double macro, std::int64_t n,
                             double t) {
  ComparisonRow row;
  row.n = n;
  row.t = t;
  row.macro = macro;
  row.replicas = static_cast<int>(micro_values.size());
  if (micro_values.empty()) return row;
  double mean = 0.0, err = 0.0;
  for (double v : micro_values) {
    mean += v;
    err += std::abs(v - macro);
  }
  mean /= micro_values.size();
  err /= micro_values.size();
  double var = 0.0;
  for (double v : micro_values) var += (v - mean) * (v - mean);
  row.micro = mean;
  row.abs_error = err;
  if (micro_values.size() > 1) {
    var /= static_cast<double>(micro_values.size() - 1);
    row.spread = std::sqrt(var / micro_values.size());
  }
  return row;
}

ComparisonRow theorem1_functional(std::span<const Configuration> replicas,
                                  const MacroField& layout, const MacroSnapshot& snap,
                                  const TestFunctional& j, std::int64_t n, double t,
                                  std::uint64_t micro_hash, std::uint64_t macro_hash) {
  if (micro_hash != macro_hash) {
    throw ValidationError("micro and macro runs were produced from different configurations");
  }
  const double ttol = 1e-9 * (1.0 + std::abs(t));
  if (std::abs(snap.t - t) > ttol) throw ValidationError("macro snapshot time does not match t");
  std::vector<double> micro;
  micro.reserve(replicas.size());
  for (const auto& cfg : replicas) {
    if (std::abs(cfg.time - t) > ttol) throw ValidationError("micro snapshot time does not match t");
    micro.push_back(micro_functional(cfg, n, j));
  }
  if (!layout.grid && (replicas.empty() || !replicas.front().domain.periodic())) {
    throw ValidationError("homogeneous comparison needs torus replicas");
  }
  const int dim = layout.grid ? layout.grid->dim : replicas.front().dim;
  const double side = replicas.empty() ? 0.0 : replicas.front().domain.side;
  const double macro = macro_functional(layout, snap.f, n, j, dim, side);
  return compare_values(micro, macro, n, t);
}

double stosszahl_integrand(const Configuration& cfg, const QSpec& q, double delta,
                           const Mollifier& eta, const DensityGrid& grid) {
  std::vector<double> self;
  const bool same = q.m1 == q.m2;
  const auto f1 = empirical_density(cfg, q.m1, delta, eta, grid, same ? &self : nullptr);
  const auto f2 = same ? f1 : empirical_density(cfg, q.m2, delta, eta, grid);
  std::vector<double> prod(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.point(k);
    const std::span<const double> xs(x.data(), grid.dim);
    double jj = 1.0;
    if (q.j) jj *= q.j(xs);
    if (q.jbar) jj *= q.jbar(xs);
    const double pair = same ? f1[k] * f1[k] - self[k] : f1[k] * f2[k];
    prod[k] = pair * jj;
  }
  return grid_integral(grid, prod);
}

StosszahlDiagnostic stosszahlansatz_check(double q_integral,
                                          std::span<const StosszahlSample> samples,
                                          double beta) {
  StosszahlDiagnostic out;
  out.lhs = q_integral;
  out.beta = beta;
  double integral = 0.0;
  for (std::size_t k = 1; k < samples.size(); ++k) {
    integral += 0.5 * (samples[k].t - samples[k - 1].t) *
                (samples[k].integrand + samples[k - 1].integrand);
  }
  out.rhs = beta * integral;
  if (out.lhs == 0.0) {
    out.gap = out.rhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    out.gap = std::abs(out.lhs - out.rhs) / std::abs(out.lhs);
  }
  return out;
}

double default_delta(double epsilon, double side) { return std::sqrt(epsilon * side); }

namespace {

struct Line {
  double a = 0.0;
  double c = 0.0;
  bool ok = false;
};

Line fit_line(const std::vector<std::pair<double, double>>& pts) {
  Line out;
  if (pts.size() < 2) return out;
  double st = 0.0, sy = 0.0;
  for (const auto& [t, y] : pts) {
    st += t;
    sy += y;
  }
  const double n = static_cast<double>(pts.size());
  const double tm = st / n, ym = sy / n;
  double stt = 0.0, sty = 0.0;
  for (const auto& [t, y] : pts) {
    stt += (t - tm) * (t - tm);
    sty += (t - tm) * (y - ym);
  }
  if (stt <= 0.0) return out;
  out.c = sty / stt;
  out.a = ym - out.c * tm;
  out.ok = true;
  return out;
}

void collect(const CountSeries& s, double scale, double window_end,
             std::vector<std::pair<double, double>>& pts) {
  const std::size_t n = std::min(s.t.size(), s.count.size());
  for (std::size_t k = 0; k < n; ++k) {
    if (s.t[k] > window_end * (1.0 + 1e-12)) continue;
    if (s.count[k] <= 0.0) continue;
    pts.emplace_back(s.t[k], 1.0 / (scale * s.count[k]));
  }
}

}  // namespace

RateFitReport effective_rate_experiment(std::span<const CountSeries> series,
                                        double density_scale, double window_end, double alpha,
                                        double beta, std::int64_t collisions, int bootstrap,
                                        std::uint64_t seed, double tolerance) {
  if (collisions < 100) {
    std::ostringstream os;
    os << "rate fit needs at least 100 collisions, observed " << collisions;
    throw ValidationError(os.str());
  }
  if (!(density_scale > 0.0)) throw ValidationError("density scale must be > 0");
  RateFitReport out;
  out.alpha = alpha;
  out.beta = beta;
  out.collisions = collisions;
  out.replicas = static_cast<int>(series.size());
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : series) collect(s, density_scale, window_end, pts);
  const Line fit = fit_line(pts);
  if (!fit.ok) throw ValidationError("rate fit failed: fewer than two distinct times in window");
  out.points = static_cast<int>(pts.size());
  out.c = fit.c;
  out.intercept = fit.a;

  std::vector<double> boot;
  if (bootstrap > 0 && series.size() > 1) {
    Philox4x32 rng(seed, 0xB007);
    boot.reserve(bootstrap);
    for (int b = 0; b < bootstrap; ++b) {
      pts.clear();
      for (std::size_t k = 0; k < series.size(); ++k) {
        collect(series[rng.below(series.size())], density_scale, window_end, pts);
      }
      const Line l = fit_line(pts);
      if (l.ok) boot.push_back(l.c);
    }
  }
  if (!boot.empty()) {
    std::sort(boot.begin(), boot.end());
    const auto pick = [&](double q) {
      const double pos = q * (boot.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, boot.size() - 1);
      return boot[lo] + (pos - lo) * (boot[hi] - boot[lo]);
    };
    out.ci_lo = pick(0.025);
    out.ci_hi = pick(0.975);
  } else {
    out.ci_lo = out.ci_hi = out.c;
  }
  out.rel_to_beta = beta > 0.0 ? std::abs(out.c - beta) / beta
                               : std::numeric_limits<double>::infinity();
  if (out.c > 0.0 && alpha > 0.0) out.separation = std::max(alpha / out.c, out.c / alpha);
  out.closer_to_beta = std::abs(out.c - beta) < std::abs(out.c - alpha);
  out.pass = out.rel_to_beta <= tolerance && out.separation >= 2.0 && out.closer_to_beta;
  return out;
}

PropensityReport propensity_audit(std::span<const TrajectoryStats> stats, double z) {
  PropensityReport out;
  out.z = z;
  out.replicas = static_cast<int>(stats.size());
  if (stats.size() < 5) throw ValidationError("propensity audit needs at least 5 replicas");
  double mean = 0.0;
  out.count_ok = true;
  for (const auto& s : stats) {
    mean += s.rate_integral;
    out.max_collisions = std::max(out.max_collisions, s.collision_count);
    out.n_particles = std::max(out.n_particles, s.initial_count);
    if (s.collision_count > s.initial_count) out.count_ok = false;
  }
  mean /= stats.size();
  double var = 0.0;
  for (const auto& s : stats) var += (s.rate_integral - mean) * (s.rate_integral - mean);
  var /= static_cast<double>(stats.size() - 1);
  out.mean = mean;
  out.sem = std::sqrt(var / stats.size());
  out.bound_ok = mean <= z + 3.0 * out.sem;
  out.pass = out.bound_ok && out.count_ok;
  return out;
}

}  // namespace coag
