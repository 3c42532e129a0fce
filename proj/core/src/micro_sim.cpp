#include "coag/micro_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace coag {

std::uint64_t Configuration::total_mass() const {
  std::uint64_t m = 0;
  for (const auto& p : particles) m += p.mass;
  return m;
}

std::int64_t Configuration::find(std::uint64_t id) const {
  for (std::size_t i = 0; i < particles.size(); ++i) {
    if (particles[i].id == id) return static_cast<std::int64_t>(i);
  }
  return -1;
}

double kernel_eps(const KernelV& v, std::span<const double> z, double r2, double epsilon) {
  const double inv = 1.0 / epsilon;
  if (v.is_radial()) return inv * inv * v.radial_value(std::sqrt(r2) * inv);
  std::array<double, kMaxDim> y{};
  for (std::size_t a = 0; a < z.size(); ++a) y[a] = z[a] * inv;
  return inv * inv * v.at(std::span<const double>(y.data(), z.size()), r2 * inv * inv);
}

namespace {

double wrap(double x, double side) {
  x -= side * std::floor(x / side);
  return x >= side ? 0.0 : x;
}

struct GridSampler {
  std::vector<double> cumulative;  ///< cumulative cell masses
  std::vector<int> cells;          ///< cells per axis
};

GridSampler make_grid_sampler(const GridTable& t) {
  const int d = static_cast<int>(t.nodes.size());
  GridSampler s;
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) {
    s.cells.push_back(t.nodes[a] - 1);
    total *= static_cast<std::size_t>(t.nodes[a] - 1);
  }
  s.cumulative.resize(total);
  std::vector<int> idx(d, 0);
  double acc = 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    double sum = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      std::size_t flat = 0, stride = 1;
      for (int a = 0; a < d; ++a) {
        flat += static_cast<std::size_t>(idx[a] + ((corner >> a) & 1)) * stride;
        stride *= static_cast<std::size_t>(t.nodes[a]);
      }
      sum += t.values[flat];
    }
    acc += sum;
    s.cumulative[k] = acc;
    int a = 0;
    while (a < d && ++idx[a] == s.cells[a]) idx[a++] = 0;
  }
  return s;
}

void sample_grid(const GridTable& t, const GridSampler& s, Philox4x32& rng,
                 std::array<double, kMaxDim>& out) {
  const int d = static_cast<int>(t.nodes.size());
  const double target = rng.uniform() * s.cumulative.back();
  auto it = std::upper_bound(s.cumulative.begin(), s.cumulative.end(), target);
  std::size_t k = std::min<std::size_t>(it - s.cumulative.begin(), s.cumulative.size() - 1);
  std::array<int, kMaxDim> base{};
  for (int a = 0; a < d; ++a) {
    base[a] = static_cast<int>(k % static_cast<std::size_t>(s.cells[a]));
    k /= static_cast<std::size_t>(s.cells[a]);
  }
  std::array<double, 1 << 8> corner_values{};
  double vmax = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    std::size_t flat = 0, stride = 1;
    for (int a = 0; a < d; ++a) {
      flat += static_cast<std::size_t>(base[a] + ((corner >> a) & 1)) * stride;
      stride *= static_cast<std::size_t>(t.nodes[a]);
    }
    corner_values[corner] = t.values[flat];
    vmax = std::max(vmax, t.values[flat]);
  }
  std::array<double, kMaxDim> frac{};
  while (true) {
    for (int a = 0; a < d; ++a) frac[a] = rng.uniform();
    double value = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      double w = 1.0;
      for (int a = 0; a < d; ++a) w *= ((corner >> a) & 1) ? frac[a] : 1.0 - frac[a];
      value += w * corner_values[corner];
    }
    if (rng.uniform() * vmax <= value) break;
  }
  for (int a = 0; a < d; ++a) out[a] = t.origin[a] + (base[a] + frac[a]) * t.spacing;
}

}  // namespace

Configuration sample_initial(const InitialDensities& h, const SimParams& params,
                             const Domain& domain, Philox4x32& rng) {
  const double z = h.total_intensity();
  if (!std::isfinite(z) || !(z > 0.0)) throw SimulationError("initial intensity undefined");
  if (std::abs(z - params.big_z) > 1e-9 * params.big_z) {
    std::ostringstream os;
    os.precision(17);
    os << "initial densities integrate to " << z << " but Z = " << params.big_z;
    throw SimulationError(os.str());
  }
  if (h.dim() != params.dim) throw SimulationError("initial density dimension mismatch");

  Configuration cfg;
  cfg.dim = params.dim;
  cfg.epsilon = params.epsilon;
  cfg.domain = domain;
  const auto& comps = h.components();
  std::vector<double> cumulative;
  std::vector<GridSampler> samplers(comps.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    acc += comps[c].intensity;
    cumulative.push_back(acc);
    if (const auto* t = std::get_if<GridTable>(&comps[c].shape)) samplers[c] = make_grid_sampler(*t);
  }
  cfg.particles.reserve(static_cast<std::size_t>(params.n_particles));
  for (std::int64_t i = 0; i < params.n_particles; ++i) {
    const double target = rng.uniform() * acc;
    std::size_t c = std::upper_bound(cumulative.begin(), cumulative.end(), target) -
                    cumulative.begin();
    c = std::min(c, comps.size() - 1);
    Particle p;
    p.id = static_cast<std::uint64_t>(i);
    p.mass = static_cast<std::uint32_t>(comps[c].mass);
    const int d = params.dim;
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, UniformBox>) {
            for (int a = 0; a < d; ++a) p.pos[a] = s.lo[a] + (s.hi[a] - s.lo[a]) * rng.uniform();
          } else if constexpr (std::is_same_v<T, IsotropicGaussian>) {
            for (int a = 0; a < d; ++a) p.pos[a] = s.center[a] + s.sigma * rng.normal();
          } else {
            sample_grid(s, samplers[c], rng, p.pos);
          }
        },
        comps[c].shape);
    if (domain.periodic()) {
      for (int a = 0; a < d; ++a) p.pos[a] = wrap(p.pos[a], domain.side);
    }
    cfg.particles.push_back(p);
  }
  cfg.next_id = static_cast<std::uint64_t>(params.n_particles);
  return cfg;
}

void diffuse(Configuration& cfg, const DiffusionPolicy& dd, double tau, Philox4x32& rng) {
  if (tau <= 0.0) return;
  std::vector<double> sigma;
  const int d = cfg.dim;
  const bool periodic = cfg.domain.periodic();
  const double side = cfg.domain.side;
  for (auto& p : cfg.particles) {
    if (p.mass >= sigma.size()) {
      const std::size_t old = sigma.size();
      sigma.resize(p.mass + 1);
      for (std::size_t m = std::max<std::size_t>(old, 1); m < sigma.size(); ++m) {
        sigma[m] = std::sqrt(2.0 * dd(static_cast<std::int64_t>(m)) * tau);
      }
    }
    const double s = sigma[p.mass];
    for (int a = 0; a < d; ++a) {
      double x = p.pos[a] + s * rng.normal();
      if (periodic) {
        if (x < 0.0 || x >= side) x = wrap(x, side);
      }
      p.pos[a] = x;
    }
  }
}

std::vector<PairCandidate> detect_pairs(const Configuration& cfg, SpatialHash& hash) {
  std::vector<PairCandidate> out;
  hash.rebuild(cfg.particles);
  hash.pairs(cfg.particles, out);
  return out;
}

namespace {

CollisionEvent make_event(const Configuration& cfg, std::size_t ia, std::size_t ib,
                          Philox4x32& rng, Particle& merged) {
  const Particle& a = cfg.particles[ia];
  const Particle& b = cfg.particles[ib];
  CollisionEvent ev;
  ev.t = cfg.time;
  ev.id_a = a.id;
  ev.id_b = b.id;
  ev.mass_a = a.mass;
  ev.mass_b = b.mass;
  const double pa = static_cast<double>(a.mass) / static_cast<double>(a.mass + b.mass);
  ev.chose_first = rng.uniform() < pa;
  ev.new_id = cfg.next_id;
  ev.new_pos = ev.chose_first ? a.pos : b.pos;
  merged.id = ev.new_id;
  merged.mass = a.mass + b.mass;
  merged.pos = ev.new_pos;
  return ev;
}

}  // namespace

CollisionEvent merge(Configuration& cfg, std::uint64_t id_a, std::uint64_t id_b,
                     Philox4x32& rng) {
  if (id_a == id_b) throw SimulationError("merge needs two distinct ids");
  const std::int64_t ia = cfg.find(id_a);
  const std::int64_t ib = cfg.find(id_b);
  if (ia < 0 || ib < 0) {
    std::ostringstream os;
    os << "merge: id " << (ia < 0 ? id_a : id_b) << " is not alive";
    throw SimulationError(os.str());
  }
  Particle merged;
  CollisionEvent ev = make_event(cfg, static_cast<std::size_t>(ia),
                                 static_cast<std::size_t>(ib), rng, merged);
  ++cfg.next_id;
  const auto hi = static_cast<std::size_t>(std::max(ia, ib));
  const auto lo = static_cast<std::size_t>(std::min(ia, ib));
  cfg.particles.erase(cfg.particles.begin() + static_cast<std::ptrdiff_t>(hi));
  cfg.particles.erase(cfg.particles.begin() + static_cast<std::ptrdiff_t>(lo));
  cfg.particles.push_back(merged);
  return ev;
}

StepResult coagulate_step(Configuration& cfg, const MicroModel& model,
                          std::vector<PairCandidate>& pairs, double dt, Philox4x32& rng,
                          const QSpec* q) {
  StepResult res;
  const int d = cfg.dim;
  const double eps = cfg.epsilon;
  const double eps_d2 = std::pow(eps, d - 2);
  std::vector<double> lambda(pairs.size());
  std::array<double, kMaxDim> z{};
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const Particle& a = cfg.particles[pairs[k].a];
    const Particle& b = cfg.particles[pairs[k].b];
    if (!model.v.is_radial()) {
      for (int c = 0; c < d; ++c) z[c] = displacement(a.pos[c], b.pos[c], cfg.domain);
    }
    const double ve = kernel_eps(model.v, std::span<const double>(z.data(), d), pairs[k].r2, eps);
    const double l = ve * model.alpha(a.mass, b.mass);
    lambda[k] = l;
    res.rate_sum += l;
    if (q != nullptr && l > 0.0) {
      const std::span<const double> xa(a.pos.data(), d), xb(b.pos.data(), d);
      if (a.mass == q->m1 && b.mass == q->m2) res.q_value += l * q->j(xa) * q->jbar(xb);
      if (b.mass == q->m1 && a.mass == q->m2) res.q_value += l * q->j(xb) * q->jbar(xa);
    }
  }
  res.q_value *= eps_d2;

  std::vector<std::uint32_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0u);
  for (std::size_t k = order.size(); k > 1; --k) {
    std::swap(order[k - 1], order[rng.below(k)]);
  }
  std::vector<char> consumed(cfg.particles.size(), 0);
  for (std::uint32_t k : order) {
    const auto& pr = pairs[k];
    if (consumed[pr.a] || consumed[pr.b]) continue;
    const double p = -std::expm1(-dt * lambda[k]);
    if (!(rng.uniform() < p)) continue;
    Particle merged;
    res.events.push_back(make_event(cfg, pr.a, pr.b, rng, merged));
    ++cfg.next_id;
    consumed[pr.a] = consumed[pr.b] = 1;
    cfg.particles.push_back(merged);
  }
  if (!res.events.empty()) {
    std::size_t w = 0;
    for (std::size_t i = 0; i < cfg.particles.size(); ++i) {
      if (i < consumed.size() && consumed[i]) continue;
      if (w != i) cfg.particles[w] = cfg.particles[i];
      ++w;
    }
    cfg.particles.resize(w);
  }
  return res;
}

std::vector<std::int64_t> mass_counts(const Configuration& cfg, int m_max) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(m_max) + 1, 0);
  for (const auto& p : cfg.particles) {
    if (p.mass <= static_cast<std::uint32_t>(m_max)) ++counts[p.mass - 1];
    else ++counts[m_max];
  }
  return counts;
}

TrajectoryStats run(Configuration& cfg, const MicroModel& model, Philox4x32& rng,
                    const RunOptions& options) {
  const SimParams& prm = model.params;
  if (cfg.dim != prm.dim) throw SimulationError("configuration dimension mismatch");
  const double range = model.v.support_radius() * cfg.epsilon;
  SpatialHash hash(cfg.dim, range, cfg.domain, options.cells_per_particle);
  TrajectoryStats stats;
  stats.initial_count = static_cast<std::int64_t>(cfg.particles.size());
  const double t0 = cfg.time;
  const double span = prm.horizon - t0;
  const std::int64_t n_steps =
      span > 0.0 ? static_cast<std::int64_t>(std::ceil(span / prm.tau - 1e-9)) : 0;
  const double eps_d2 = std::pow(cfg.epsilon, cfg.dim - 2);
  const QSpec* q = options.q ? &*options.q : nullptr;

  std::vector<double> observe = options.observe_times;
  std::sort(observe.begin(), observe.end());
  std::size_t next_obs = 0;
  auto fire_observers = [&]() {
    while (next_obs < observe.size() && observe[next_obs] <= cfg.time + 1e-12 * (1.0 + cfg.time)) {
      if (options.observer) options.observer(cfg);
      ++next_obs;
    }
  };

  stats.snapshots.emplace_back(cfg.time, config_digest(cfg));
  stats.counts.push_back({cfg.time, mass_counts(cfg, model.m_max)});
  fire_observers();

  std::vector<PairCandidate> pairs;
  for (std::int64_t step = 1; step <= n_steps; ++step) {
    const double t_next = step == n_steps ? prm.horizon : t0 + static_cast<double>(step) * prm.tau;
    const double dt = t_next - cfg.time;
    diffuse(cfg, model.dd, dt, rng);
    cfg.time = t_next;
    pairs.clear();
    hash.rebuild(cfg.particles);
    hash.pairs(cfg.particles, pairs);
    StepResult res = coagulate_step(cfg, model, pairs, dt, rng, q);
    stats.rate_integral += dt * eps_d2 * res.rate_sum;
    stats.collision_count += static_cast<std::int64_t>(res.events.size());
    if (q != nullptr) {
      stats.q_integral += dt * res.q_value;
      if (step % std::max<std::int64_t>(options.q_sample_every, 1) == 0) {
        stats.q_series.push_back({cfg.time, res.q_value});
      }
    }
    if (options.record_events) {
      stats.events.insert(stats.events.end(), res.events.begin(), res.events.end());
    }
    if (!res.events.empty()) {
      std::int64_t overflow = 0;
      for (const auto& p : cfg.particles) overflow += p.mass > static_cast<std::uint32_t>(model.m_max);
      stats.max_overflow_seen = std::max(stats.max_overflow_seen, overflow);
      if (model.max_overflow >= 0 && overflow > model.max_overflow) {
        std::ostringstream os;
        os << "overflow bucket holds " << overflow << " particles above mass " << model.m_max
           << " (limit " << model.max_overflow << ") at t=" << cfg.time;
        throw SimulationError(os.str());
      }
    }
    ++stats.steps;
    if (options.count_every > 0 && step % options.count_every == 0 && step != n_steps) {
      stats.counts.push_back({cfg.time, mass_counts(cfg, model.m_max)});
    }
    fire_observers();
  }
  if (n_steps > 0) {
    stats.counts.push_back({cfg.time, mass_counts(cfg, model.m_max)});
    stats.snapshots.emplace_back(cfg.time, config_digest(cfg));
  }
  stats.final_count = static_cast<std::int64_t>(cfg.particles.size());
  if (stats.collision_count != stats.initial_count - stats.final_count) {
    throw SimulationError("collision count does not match particle count change");
  }
  return stats;
}

double q_statistic(const Configuration& cfg, const MicroModel& model, const QSpec& q) {
  const int d = cfg.dim;
  const double range2 = std::pow(model.v.support_radius() * cfg.epsilon, 2);
  double sum = 0.0;
  std::array<double, kMaxDim> z{};
  for (std::size_t i = 0; i < cfg.particles.size(); ++i) {
    const Particle& a = cfg.particles[i];
    if (a.mass != q.m1) continue;
    for (std::size_t j = 0; j < cfg.particles.size(); ++j) {
      const Particle& b = cfg.particles[j];
      if (i == j || b.mass != q.m2) continue;
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) {
        z[c] = displacement(a.pos[c], b.pos[c], cfg.domain);
        r2 += z[c] * z[c];
      }
      if (r2 >= range2) continue;
      const double ve = kernel_eps(model.v, std::span<const double>(z.data(), d), r2, cfg.epsilon);
      sum += ve * model.alpha(a.mass, b.mass) * q.j(std::span<const double>(a.pos.data(), d)) *
             q.jbar(std::span<const double>(b.pos.data(), d));
    }
  }
  return std::pow(cfg.epsilon, d - 2) * sum;
}

std::uint64_t config_digest(const Configuration& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t word, int bytes) {
    for (int k = 0; k < bytes; ++k) {
      h ^= (word >> (8 * k)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  mix(std::bit_cast<std::uint64_t>(cfg.time), 8);
  for (const auto& p : cfg.particles) {
    mix(p.id, 8);
    mix(p.mass, 4);
    for (int a = 0; a < cfg.dim; ++a) mix(std::bit_cast<std::uint64_t>(p.pos[a]), 8);
  }
  return h;
}

// ---------------------------------------------------------------------------

Mollifier::Mollifier(int dim) : dim_(dim) {
  using boost::math::quadrature::gauss_kronrod;
  auto bump = [](double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; };
  const double area = unit_sphere_area(dim);
  const double m0 = gauss_kronrod<double, 61>::integrate(
      [&](double r) { return bump(r) * std::pow(r, dim - 1); }, 0.0, 1.0, 15, 1e-15);
  const double m2 = gauss_kronrod<double, 61>::integrate(
      [&](double r) { return bump(r) * bump(r) * std::pow(r, dim - 1); }, 0.0, 1.0, 15, 1e-15);
  norm_ = 1.0 / (area * m0);
  square_integral_ = area * m2 * norm_ * norm_;
}

double Mollifier::operator()(double s2) const {
  return s2 < 1.0 ? norm_ * std::exp(-1.0 / (1.0 - s2)) : 0.0;
}

std::size_t DensityGrid::size() const {
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(nodes[a]);
  return n;
}

std::array<double, kMaxDim> DensityGrid::point(std::size_t flat) const {
  std::array<double, kMaxDim> x{};
  for (int a = 0; a < dim; ++a) {
    const auto n = static_cast<std::size_t>(nodes[a]);
    x[a] = origin[a] + static_cast<double>(flat % n) * spacing;
    flat /= n;
  }
  return x;
}

DensityGrid DensityGrid::torus(int dim, double side, int nodes_per_axis) {
  DensityGrid g;
  g.dim = dim;
  g.spacing = side / nodes_per_axis;
  g.periodic = true;
  for (int a = 0; a < dim; ++a) g.nodes[a] = nodes_per_axis;
  return g;
}

DensityGrid DensityGrid::box(int dim, std::span<const double> lo, double spacing,
                             std::span<const int> nodes) {
  DensityGrid g;
  g.dim = dim;
  g.spacing = spacing;
  for (int a = 0; a < dim; ++a) {
    g.origin[a] = lo[a];
    g.nodes[a] = nodes[a];
  }
  return g;
}

std::vector<double> empirical_density(const Configuration& cfg, std::int64_t mass,
                                      double delta, const Mollifier& eta,
                                      const DensityGrid& grid,
                                      std::vector<double>* self_square) {
  if (!(delta > 0.0)) throw SimulationError("mollifier width must be > 0");
  const int d = grid.dim;
  std::vector<double> field(grid.size(), 0.0);
  if (self_square) self_square->assign(grid.size(), 0.0);
  const double eps_d2 = std::pow(cfg.epsilon, d - 2);
  const double amp = eps_d2 / std::pow(delta, d);
  const double h = grid.spacing;
  const double inv_d2 = 1.0 / (delta * delta);

  std::array<int, kMaxDim> lo{}, count{}, k{};
  std::array<std::size_t, kMaxDim> stride{};
  std::size_t s = 1;
  for (int a = 0; a < d; ++a) {
    stride[a] = s;
    s *= static_cast<std::size_t>(grid.nodes[a]);
  }
  std::vector<double> ax(static_cast<std::size_t>(d) * 64);
  std::vector<std::size_t> idx(static_cast<std::size_t>(d) * 64);
  for (const auto& p : cfg.particles) {
    if (p.mass != mass) continue;
    bool empty = false;
    for (int a = 0; a < d; ++a) {
      const double rel = p.pos[a] - grid.origin[a];
      int k0 = static_cast<int>(std::ceil((rel - delta) / h));
      int k1 = static_cast<int>(std::floor((rel + delta) / h));
      if (!grid.periodic) {
        k0 = std::max(k0, 0);
        k1 = std::min(k1, grid.nodes[a] - 1);
      }
      lo[a] = k0;
      count[a] = std::max(0, k1 - k0 + 1);
      if (count[a] == 0) empty = true;
      if (static_cast<std::size_t>(count[a]) * d > ax.size()) {
        ax.resize(static_cast<std::size_t>(count[a]) * d);
        idx.resize(static_cast<std::size_t>(count[a]) * d);
      }
    }
    if (empty) continue;
    const std::size_t width = ax.size() / d;
    for (int a = 0; a < d; ++a) {
      for (int j = 0; j < count[a]; ++j) {
        const int node = lo[a] + j;
        const double z = grid.origin[a] + node * h - p.pos[a];
        ax[a * width + j] = z * z * inv_d2;
        int wrapped = node;
        if (grid.periodic) {
          wrapped %= grid.nodes[a];
          if (wrapped < 0) wrapped += grid.nodes[a];
        }
        idx[a * width + j] = static_cast<std::size_t>(wrapped) * stride[a];
      }
    }
    k.fill(0);
    while (true) {
      double s2 = 0.0;
      std::size_t flat = 0;
      for (int a = 0; a < d; ++a) {
        s2 += ax[a * width + k[a]];
        flat += idx[a * width + k[a]];
      }
      if (s2 < 1.0) {
        const double v = amp * eta(s2);
        field[flat] += v;
        if (self_square) (*self_square)[flat] += v * v;
      }
      int a = 0;
      while (a < d && ++k[a] == count[a]) k[a++] = 0;
      if (a == d) break;
    }
  }
  return field;
}

double grid_integral(const DensityGrid& grid, std::span<const double> field) {
  const int d = grid.dim;
  const double cell = std::pow(grid.spacing, d);
  if (grid.periodic) return std::accumulate(field.begin(), field.end(), 0.0) * cell;
  double sum = 0.0;
  std::array<int, kMaxDim> k{};
  for (std::size_t flat = 0; flat < field.size(); ++flat) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      if (k[a] == 0 || k[a] == grid.nodes[a] - 1) w *= 0.5;
    }
    sum += w * field[flat];
    int a = 0;
    while (a < d && ++k[a] == grid.nodes[a]) k[a++] = 0;
  }
  return sum * cell;
}

}  // namespace coag
