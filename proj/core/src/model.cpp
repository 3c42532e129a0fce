#include "coag/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace coag {

double unit_sphere_area(int dim) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

double unit_ball_volume(int dim) { return unit_sphere_area(dim) / dim; }

double newton_constant(int dim) {
  if (dim < 3) throw ModelError("Newtonian kernel requires dim >= 3");
  return 1.0 / ((dim - 2) * unit_sphere_area(dim));
}

SimParams build_params(int dim, double big_z, std::int64_t n_particles,
                       double tau_factor) {
  if (dim < 3) {
    throw ModelError("dim must be >= 3: pair differences of Brownian motions "
                     "are recurrent in d < 3");
  }
  if (dim > kMaxDim) throw ModelError("dim exceeds kMaxDim");
  if (!(big_z > 0.0)) throw ModelError("big_z must be > 0");
  if (n_particles < 1) throw ModelError("n_particles must be >= 1");
  if (!(tau_factor > 0.0)) throw ModelError("tau_factor must be > 0");

  SimParams p;
  p.dim = dim;
  p.big_z = big_z;
  p.n_particles = n_particles;
  p.epsilon = std::pow(big_z / static_cast<double>(n_particles), 1.0 / (dim - 2));
  p.tau = tau_factor * p.epsilon * p.epsilon;
  return p;
}

void validate(const SimParams& p) {
  if (p.dim < 3 || p.dim > kMaxDim) throw ModelError("dim out of range [3, kMaxDim]");
  if (!(p.big_z > 0.0)) throw ModelError("big_z must be > 0");
  if (p.n_particles < 1) throw ModelError("n_particles must be >= 1");
  if (!(p.epsilon > 0.0)) throw ModelError("epsilon must be > 0");
  const double lhs =
      static_cast<double>(p.n_particles) * std::pow(p.epsilon, p.dim - 2);
  if (std::abs(lhs - p.big_z) > 1e-12 * p.big_z) {
    std::ostringstream os;
    os.precision(17);
    os << "N eps^(d-2) = " << lhs << " does not match Z = " << p.big_z;
    throw ModelError(os.str());
  }
  if (!(p.tau > 0.0)) throw ModelError("tau must be > 0");
  if (!(p.horizon >= 0.0)) throw ModelError("horizon must be >= 0");
}

// ---------------------------------------------------------------------------

double smooth_step_down(double t) {
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  const double a = std::exp(-1.0 / (1.0 - t));
  const double b = std::exp(-1.0 / t);
  return a / (a + b);
}

KernelV KernelV::radial(int dim, double support_radius, RadialProfile profile,
                        std::string name) {
  if (!(support_radius > 0.0)) throw ModelError("support radius must be > 0");
  KernelV k;
  k.dim_ = dim;
  k.support_radius_ = support_radius;
  k.radial_ = std::move(profile);
  k.name_ = std::move(name);
  k.normalization_ = kernel_integral(k);
  return k;
}

KernelV KernelV::general(int dim, double support_radius, GeneralProfile profile,
                         std::string name) {
  if (!(support_radius > 0.0)) throw ModelError("support radius must be > 0");
  KernelV k;
  k.dim_ = dim;
  k.support_radius_ = support_radius;
  k.general_ = std::move(profile);
  k.name_ = std::move(name);
  k.normalization_ = kernel_integral(k);
  return k;
}

double KernelV::radial_value(double r) const {
  if (r >= support_radius_) return 0.0;
  if (radial_) return scale_ * radial_(r);
  std::array<double, kMaxDim> x{};
  x[0] = r;
  return scale_ * general_(std::span<const double>(x.data(), dim_));
}

double KernelV::operator()(std::span<const double> x) const {
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  return at(x, r2);
}

double KernelV::at(std::span<const double> x, double r2) const {
  if (r2 >= support_radius_ * support_radius_) return 0.0;
  if (radial_) return scale_ * radial_(std::sqrt(r2));
  return scale_ * general_(x);
}

KernelV KernelV::scaled(double factor) const {
  KernelV k = *this;
  k.scale_ *= factor;
  k.normalization_ *= factor;
  return k;
}

namespace {

int general_grid_points(int dim) {
  const int n = static_cast<int>(std::floor(std::pow(262144.0, 1.0 / dim)));
  return std::max(8, n - n % 2);
}

template <typename F>
void for_each_midpoint(int dim, double half_width, int n, F&& f) {
  const double h = 2.0 * half_width / n;
  std::array<int, kMaxDim> idx{};
  std::array<double, kMaxDim> x{};
  while (true) {
    for (int a = 0; a < dim; ++a) x[a] = -half_width + (idx[a] + 0.5) * h;
    f(std::span<const double>(x.data(), dim), h);
    int a = 0;
    while (a < dim && ++idx[a] == n) idx[a++] = 0;
    if (a == dim) break;
  }
}

}  // namespace

double kernel_integral(const KernelV& kernel) {
  const int d = kernel.dim();
  const double R = kernel.support_radius();
  if (kernel.is_radial()) {
    using boost::math::quadrature::gauss_kronrod;
    auto integrand = [&](double r) {
      return kernel.radial_value(r) * std::pow(r, d - 1);
    };
    // Piecewise panels keep kinks (plateau edges, cones) from stalling the
    // adaptive rule.
    constexpr int kPanels = 64;
    double total = 0.0;
    for (int p = 0; p < kPanels; ++p) {
      const double a = R * p / kPanels;
      const double b = R * (p + 1) / kPanels;
      total += gauss_kronrod<double, 31>::integrate(integrand, a, b, 8, 1e-12);
    }
    return unit_sphere_area(d) * total;
  }
  const int n = general_grid_points(d);
  double total = 0.0;
  for_each_midpoint(d, R, n, [&](std::span<const double> x, double h) {
    total += kernel(x) * std::pow(h, d);
  });
  return total;
}

KernelV kernel_normalize(const KernelV& kernel) {
  const int d = kernel.dim();
  const double R = kernel.support_radius();
  bool negative = false;
  if (kernel.is_radial()) {
    constexpr int kSamples = 4096;
    for (int i = 0; i <= kSamples && !negative; ++i) {
      negative = kernel.radial_value(R * i / (kSamples + 1.0)) < 0.0;
    }
  } else {
    for_each_midpoint(d, R, general_grid_points(d),
                      [&](std::span<const double> x, double) {
                        if (kernel(x) < 0.0) negative = true;
                      });
  }
  if (negative) throw ModelError("kernel profile has negative samples");
  const double integral = kernel_integral(kernel);
  if (!(integral > 0.0)) throw ModelError("kernel profile has zero integral");
  KernelV k = kernel.scaled(1.0 / integral);
  k.normalization_ = kernel_integral(k);
  return k;
}

double kernel_eval(const KernelV& kernel, std::span<const double> x) {
  return kernel(x);
}

KernelV make_kernel(int dim, const KernelSpec& spec) {
  const double R = spec.support_radius;
  if (!(R > 0.0)) throw ModelError("kernel support_radius must be > 0");
  if (spec.shape == "bump") {
    return kernel_normalize(KernelV::radial(
        dim, R,
        [R](double r) {
          const double s = r / R;
          return s < 1.0 ? std::exp(-1.0 / (1.0 - s * s)) : 0.0;
        },
        "bump"));
  }
  if (spec.shape == "plateau") {
    const double w = spec.edge_width;
    if (!(w > 0.0 && w <= 1.0)) throw ModelError("plateau edge_width must be in (0,1]");
    return kernel_normalize(KernelV::radial(
        dim, R,
        [R, w](double r) { return smooth_step_down((r / R - (1.0 - w)) / w); },
        "plateau"));
  }
  if (spec.shape == "quadratic") {
    return kernel_normalize(KernelV::radial(
        dim, R,
        [R](double r) {
          const double s = 1.0 - (r / R) * (r / R);
          return s > 0.0 ? s * s : 0.0;
        },
        "quadratic"));
  }
  if (spec.shape == "cone") {
    return kernel_normalize(KernelV::radial(
        dim, R, [R](double r) { return std::max(0.0, 1.0 - r / R); }, "cone"));
  }
  if (spec.shape == "ellipsoid") {
    std::vector<double> axes = spec.axes;
    axes.resize(dim, R);
    for (double a : axes) {
      if (!(a > 0.0 && a <= R)) {
        throw ModelError("ellipsoid semi-axes must lie in (0, support_radius]");
      }
    }
    return kernel_normalize(KernelV::general(
        dim, R,
        [axes](std::span<const double> x) {
          double q = 0.0;
          for (std::size_t a = 0; a < x.size(); ++a) q += (x[a] / axes[a]) * (x[a] / axes[a]);
          return q < 1.0 ? std::exp(-1.0 / (1.0 - q)) : 0.0;
        },
        "ellipsoid"));
  }
  throw ModelError("unknown kernel shape '" + spec.shape + "'");
}

// ---------------------------------------------------------------------------

RatePolicy RatePolicy::constant(double c) {
  if (!(c >= 0.0)) throw ModelError("alpha must be >= 0");
  return RatePolicy(Constant{c});
}

RatePolicy RatePolicy::product(double c) {
  if (!(c >= 0.0)) throw ModelError("alpha must be >= 0");
  return RatePolicy(Product{c});
}

RatePolicy RatePolicy::table(std::vector<std::vector<double>> values) {
  const std::size_t n = values.size();
  if (n == 0) throw ModelError("alpha table is empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i].size() != n) throw ModelError("alpha table must be square");
    for (double v : values[i]) {
      if (!(v >= 0.0)) throw ModelError("alpha table entries must be >= 0");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (values[i][j] != values[j][i]) {
        std::ostringstream os;
        os << "alpha table is asymmetric at (" << i + 1 << "," << j + 1 << ")";
        throw ModelError(os.str());
      }
    }
  }
  return RatePolicy(Table{std::move(values)});
}

double RatePolicy::operator()(std::int64_t n, std::int64_t m) const {
  struct Visitor {
    std::int64_t n, m;
    double operator()(const Constant& c) const { return c.c; }
    double operator()(const Product& p) const {
      return p.c * static_cast<double>(n) * static_cast<double>(m);
    }
    double operator()(const Table& t) const {
      const auto last = static_cast<std::int64_t>(t.values.size());
      const auto i = std::clamp<std::int64_t>(n, 1, last) - 1;
      const auto j = std::clamp<std::int64_t>(m, 1, last) - 1;
      return t.values[i][j];
    }
  };
  return std::visit(Visitor{n, m}, form_);
}

std::string RatePolicy::kind() const {
  switch (form_.index()) {
    case 0: return "constant";
    case 1: return "product";
    default: return "table";
  }
}

bool RatePolicy::is_symmetric(int m_max) const {
  for (int n = 1; n <= m_max; ++n) {
    for (int m = 1; m < n; ++m) {
      if ((*this)(n, m) != (*this)(m, n)) return false;
    }
  }
  return true;
}

DiffusionPolicy DiffusionPolicy::constant(double c) {
  if (!(c > 0.0)) throw ModelError("diffusion value must be > 0");
  return DiffusionPolicy(Constant{c});
}

DiffusionPolicy DiffusionPolicy::power(double c, double exponent) {
  if (!(c > 0.0)) throw ModelError("diffusion value must be > 0");
  return DiffusionPolicy(Power{c, exponent});
}

DiffusionPolicy DiffusionPolicy::exponential(double c, double base) {
  if (!(c > 0.0) || !(base > 0.0)) {
    throw ModelError("diffusion value and base must be > 0");
  }
  return DiffusionPolicy(Exponential{c, base});
}

DiffusionPolicy DiffusionPolicy::table(std::vector<double> values) {
  if (values.empty()) throw ModelError("diffusion table is empty");
  for (double v : values) {
    if (!(v > 0.0)) throw ModelError("diffusion table entries must be > 0");
  }
  return DiffusionPolicy(Table{std::move(values)});
}

double DiffusionPolicy::operator()(std::int64_t n) const {
  const double x = static_cast<double>(n);
  struct Visitor {
    std::int64_t n;
    double x;
    double operator()(const Constant& c) const { return c.c; }
    double operator()(const Power& p) const { return p.c * std::pow(x, p.exponent); }
    double operator()(const Exponential& e) const { return e.c * std::pow(e.base, x); }
    double operator()(const Table& t) const {
      const auto last = static_cast<std::int64_t>(t.values.size());
      return t.values[std::clamp<std::int64_t>(n, 1, last) - 1];
    }
  };
  return std::visit(Visitor{n, x}, form_);
}

std::string DiffusionPolicy::kind() const {
  switch (form_.index()) {
    case 0: return "constant";
    case 1: return "power";
    case 2: return "exponential";
    default: return "table";
  }
}

// ---------------------------------------------------------------------------

double grid_table_integral(const GridTable& table) {
  const int d = static_cast<int>(table.nodes.size());
  std::size_t total = 1;
  for (int n : table.nodes) {
    if (n < 2) throw ModelError("grid table needs >= 2 nodes per axis");
    total *= static_cast<std::size_t>(n);
  }
  if (table.values.size() != total) throw ModelError("grid table size mismatch");
  double sum = 0.0;
  std::vector<int> idx(d, 0);
  for (std::size_t k = 0; k < total; ++k) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      if (idx[a] == 0 || idx[a] == table.nodes[a] - 1) w *= 0.5;
    }
    sum += w * table.values[k];
    int a = 0;
    while (a < d && ++idx[a] == table.nodes[a]) idx[a++] = 0;
  }
  return sum * std::pow(table.spacing, d);
}

namespace {

std::size_t shape_dim(const DensityShape& s) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, UniformBox>) return v.lo.size();
        else if constexpr (std::is_same_v<T, IsotropicGaussian>) return v.center.size();
        else return v.nodes.size();
      },
      s);
}

double grid_table_value(const GridTable& t, std::span<const double> x) {
  const int d = static_cast<int>(t.nodes.size());
  std::array<int, kMaxDim> base{};
  std::array<double, kMaxDim> frac{};
  for (int a = 0; a < d; ++a) {
    const double s = (x[a] - t.origin[a]) / t.spacing;
    if (s < 0.0 || s > t.nodes[a] - 1) return 0.0;
    int i = static_cast<int>(std::floor(s));
    i = std::min(i, t.nodes[a] - 2);
    base[a] = i;
    frac[a] = s - i;
  }
  double value = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    std::size_t stride = 1;
    for (int a = 0; a < d; ++a) {
      const int bit = (corner >> a) & 1;
      w *= bit ? frac[a] : 1.0 - frac[a];
      flat += static_cast<std::size_t>(base[a] + bit) * stride;
      stride *= static_cast<std::size_t>(t.nodes[a]);
    }
    if (w != 0.0) value += w * t.values[flat];
  }
  return value;
}

double shape_density(const DensityComponent& c, std::span<const double> x) {
  const auto d = static_cast<int>(x.size());
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          double vol = 1.0;
          for (int a = 0; a < d; ++a) {
            if (x[a] < s.lo[a] || x[a] > s.hi[a]) return 0.0;
            vol *= s.hi[a] - s.lo[a];
          }
          return c.intensity / vol;
        } else if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          double r2 = 0.0;
          for (int a = 0; a < d; ++a) r2 += (x[a] - s.center[a]) * (x[a] - s.center[a]);
          const double var = s.sigma * s.sigma;
          return c.intensity * std::exp(-0.5 * r2 / var) /
                 std::pow(2.0 * std::numbers::pi * var, 0.5 * d);
        } else {
          return grid_table_value(s, x);
        }
      },
      c.shape);
}

}  // namespace

InitialDensities::InitialDensities(std::vector<DensityComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ModelError("initial densities need >= 1 component");
  const std::size_t d = shape_dim(components_.front().shape);
  for (auto& c : components_) {
    if (c.mass < 1) throw ModelError("component mass must be >= 1");
    if (shape_dim(c.shape) != d) throw ModelError("component dimensions differ");
    if (auto* box = std::get_if<UniformBox>(&c.shape)) {
      if (box->hi.size() != box->lo.size()) throw ModelError("box lo/hi size mismatch");
      for (std::size_t a = 0; a < d; ++a) {
        if (!(box->hi[a] > box->lo[a])) throw ModelError("box must have hi > lo");
      }
    } else if (auto* g = std::get_if<IsotropicGaussian>(&c.shape)) {
      if (!(g->sigma > 0.0)) throw ModelError("gaussian sigma must be > 0");
    } else if (auto* t = std::get_if<GridTable>(&c.shape)) {
      if (t->origin.size() != d) throw ModelError("grid origin size mismatch");
      if (!(t->spacing > 0.0)) throw ModelError("grid spacing must be > 0");
      for (double v : t->values) {
        if (!(v >= 0.0)) throw ModelError("grid table values must be >= 0");
      }
      c.intensity = grid_table_integral(*t);
    }
    if (!(c.intensity >= 0.0) || !std::isfinite(c.intensity)) {
      throw ModelError("component intensity must be finite and >= 0");
    }
  }
  if (!(total_intensity() > 0.0)) throw ModelError("total intensity Z must be > 0");
}

double InitialDensities::total_intensity() const {
  double z = 0.0;
  for (const auto& c : components_) z += c.intensity;
  return z;
}

double InitialDensities::total_mass_intensity() const {
  double k = 0.0;
  for (const auto& c : components_) k += static_cast<double>(c.mass) * c.intensity;
  return k;
}

int InitialDensities::dim() const {
  return static_cast<int>(shape_dim(components_.front().shape));
}

double InitialDensities::density(std::int64_t mass, std::span<const double> x,
                                 double torus_side) const {
  const int d = static_cast<int>(x.size());
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.mass != mass) continue;
    if (torus_side <= 0.0) {
      total += shape_density(c, x);
      continue;
    }
    std::array<int, kMaxDim> shift{};
    std::array<double, kMaxDim> y{};
    for (int a = 0; a < d; ++a) shift[a] = -1;
    while (true) {
      for (int a = 0; a < d; ++a) y[a] = x[a] + shift[a] * torus_side;
      total += shape_density(c, std::span<const double>(y.data(), d));
      int a = 0;
      while (a < d && ++shift[a] == 2) shift[a++] = -1;
      if (a == d) break;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------

HypothesisReport check_hypothesis(int dim, const RatePolicy& gamma,
                                  const DiffusionPolicy& dd, int m_max) {
  if (m_max < 2) throw ModelError("check_hypothesis needs m_max >= 2");
  const double e1 = 0.5 * (3.0 * dim - 2.0);
  const double e2 = 2.0 * dim - 1.0;
  HypothesisReport report;
  report.worst_ratio = -1.0;
  for (std::int64_t n1 = 1; n1 <= m_max; ++n1) {
    for (std::int64_t n2 = 1; n2 < m_max; ++n2) {
      for (std::int64_t n3 = 1; n2 + n3 <= m_max; ++n3) {
        const double r = dd(n2 + n3) / dd(n2);
        const double factor = std::max({1.0, std::pow(r, e1), std::pow(r, e2)});
        const double lhs = static_cast<double>(n2) * gamma(n1, n2 + n3) * factor;
        const double rhs = static_cast<double>(n2 + n3) * gamma(n1, n2);
        double ratio;
        if (rhs > 0.0) ratio = lhs / rhs;
        else ratio = lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        if (ratio > report.worst_ratio) {
          report.worst_ratio = ratio;
          report.worst_triple = {n1, n2, n3};
        }
      }
    }
  }
  report.holds = report.worst_ratio <= 1.0;
  return report;
}

}  // namespace coag
