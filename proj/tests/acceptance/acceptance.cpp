// Acceptance harness: prints one PASS/FAIL line per criterion.
//   acceptance            run all criteria
//   acceptance 3 7        run the listed criteria

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "coag/cell_problem.hpp"
#include "coag/config.hpp"
#include "coag/experiment.hpp"
#include "coag/io.hpp"
#include "coag/macro_pde.hpp"
#include "coag/micro_sim.hpp"
#include "coag/model.hpp"
#include "coag/validation.hpp"

using namespace coag;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunConfig config_from(const std::string& yaml) {
  ParseOptions o;
  o.env_overrides = false;
  return parse_config_text(yaml, "<acceptance>", o);
}

// ---------------------------------------------------------------------------

Outcome cell_bounds() {
  const KernelV v = make_kernel(3, {"plateau", 1.0, 0.02});
  auto grid = std::make_shared<const CellGrid>(make_radial_grid(v));
  Outcome o{true, ""};
  for (double ap : {1e-3, 1.0, 10.0, 1e3}) {
    const CellSolution s = solve_cell_problem(v, ap, grid);
    const auto [lo, hi] = std::minmax_element(s.u_values.begin(), s.u_values.end());
    const bool ok = *lo >= -1.0 - 1e-9 && *hi <= 1e-9 && s.residual <= 1e-8;
    o.pass = o.pass && ok;
    o.detail += "a'=" + fmt(ap) + " u in [" + fmt(*lo, 6) + "," + fmt(*hi, 3) + "] res " +
                fmt(s.residual, 2) + "; ";
  }
  return o;
}

Outcome capacity_limit() {
  const KernelV v = make_kernel(3, {"plateau", 1.0, 0.02});
  auto grid = std::make_shared<const CellGrid>(make_radial_grid(v));
  const auto curve = effective_rate_curve(v, 1.0, {1.0, 10.0, 100.0, 1e3, 1e4}, grid);
  const double cap = capacity_of_support(v).value;
  const double four_pi = 4.0 * std::numbers::pi;
  Outcome o{true, ""};
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve[k].f > cap + 1e-6) o.pass = false;
    if (k > 0 && curve[k].f < curve[k - 1].f - 1e-8 * cap) o.pass = false;
    o.detail += "F(" + fmt(curve[k].beta_param) + ")=" + fmt(curve[k].f, 6) + " ";
  }
  const double last = curve.back().f;
  if (last < 0.95 * four_pi) o.pass = false;
  const double far = effective_rate_curve(v, 1.0, {1e6}, grid)[0].f;
  if (std::abs(far - four_pi) > 0.02 * four_pi) o.pass = false;
  o.detail += "cap=" + fmt(cap, 6) + " F(1e4)/4pi=" + fmt(last / four_pi) +
              " F(1e6)/4pi=" + fmt(far / four_pi);
  return o;
}

Outcome rate_recipe() {
  const KernelV v = make_kernel(3, {"plateau", 1.0, 0.02});
  auto grid = std::make_shared<const CellGrid>(make_radial_grid(v));
  const RatePolicy alpha = RatePolicy::product(5.0);
  const DiffusionPolicy dd = DiffusionPolicy::power(0.5, -1.0 / 3.0);
  const double cap = capacity_of_support(v).value;
  double asym = 0.0, worst_alpha = -1e300, worst_cap = -1e300, min_beta = 1e300;
  std::map<std::pair<int, int>, double> b;
  for (int n = 1; n <= 10; ++n) {
    for (int m = 1; m <= 10; ++m) b[{n, m}] = compute_beta(n, m, v, alpha, dd, grid).beta;
  }
  for (int n = 1; n <= 10; ++n) {
    for (int m = 1; m <= 10; ++m) {
      const double x = b[{n, m}];
      asym = std::max(asym, std::abs(x - b[{m, n}]));
      worst_alpha = std::max(worst_alpha, x - alpha(n, m));
      worst_cap = std::max(worst_cap, x - (dd(n) + dd(m)) * cap);
      min_beta = std::min(min_beta, x);
    }
  }
  const bool ok = asym <= 1e-10 && min_beta >= 0.0 && worst_alpha <= 0.0 && worst_cap <= 1e-6;
  return {ok, "max|b(n,m)-b(m,n)|=" + fmt(asym, 2) + " min b=" + fmt(min_beta) +
                  " max(b-a)=" + fmt(worst_alpha) + " max(b-(d+d)cap)=" + fmt(worst_cap)};
}

Outcome ode_oracle() {
  const int m_max = 50;
  const double beta = 2.0;
  const double s = reaction_scale(ReactionConvention::pair);
  std::vector<double> f0(m_max, 0.0);
  f0[0] = 1.0;
  MacroModel model{BetaMatrix(m_max, beta), DiffusionPolicy::constant(1.0),
                   ReactionConvention::pair};
  const std::vector<double> times{0.1, 0.5, 1.0};
  const auto snaps = solve(make_homogeneous(m_max, f0), model, 1.0, 1e-3, times);

  using State = std::vector<double>;
  auto rhs = [&](const State& f, State& df, double) {
    double total = 0.0;
    for (double x : f) total += x;
    for (int n = 1; n <= m_max; ++n) {
      double g = 0.0;
      for (int m = 1; m < n; ++m) g += f[m - 1] * f[n - m - 1];
      df[n - 1] = s * beta * (g - 2.0 * f[n - 1] * total);
    }
  };
  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_controlled(1e-10, 1e-10, ode::runge_kutta_dopri5<State>());
  State y = f0;
  double t = 0.0, worst = 0.0;
  Outcome o{true, ""};
  for (double target : times) {
    ode::integrate_adaptive(stepper, rhs, y, t, target, 1e-4);
    t = target;
    const auto it = std::find_if(snaps.begin(), snaps.end(),
                                 [&](const MacroSnapshot& m) { return std::abs(m.t - target) < 1e-12; });
    if (it == snaps.end()) return {false, "no snapshot at t=" + fmt(target)};
    double sup = 0.0;
    for (int n = 0; n < m_max; ++n) sup = std::max(sup, std::abs(it->f[n] - y[n]));
    worst = std::max(worst, sup);
    o.detail += "t=" + fmt(target) + " sup=" + fmt(sup, 2) + " ";
  }
  o.pass = worst <= 1e-6;
  return o;
}

double field_mass(const MacroField& layout, const std::vector<double>& f) {
  const double vol = layout.grid ? layout.grid->cell_volume() : 1.0;
  double total = 0.0;
  for (std::size_t k = 0; k < layout.nodes(); ++k) {
    for (int n = 1; n <= layout.m_max; ++n) total += n * f[k * layout.m_max + n - 1];
  }
  return total * vol;
}

double max_drift(const MacroField& layout, const std::vector<MacroSnapshot>& snaps) {
  const double initial = field_mass(layout, snaps.front().f);
  double worst = 0.0;
  for (const auto& s : snaps) {
    const double m = field_mass(layout, s.f);
    worst = std::max(worst, std::abs(m + s.ledger.truncation_flux - initial) / initial);
  }
  return worst;
}

Outcome mass_conservation() {
  const int m_max = 10;
  const KernelV v = make_kernel(3, {"plateau", 1.0, 0.02});
  const DiffusionPolicy dd = DiffusionPolicy::power(0.5, -1.0 / 3.0);
  MacroModel model{beta_matrix(m_max, v, RatePolicy::product(1.0), dd), dd,
                   ReactionConvention::pair};
  std::vector<double> obs;
  for (int k = 1; k < 10; ++k) obs.push_back(0.1 * k);

  std::vector<double> f0(m_max, 0.0);
  f0[0] = 2.0;
  const MacroField hom = make_homogeneous(m_max, f0);
  const auto hs = solve(hom, model, 1.0, 1e-3, obs);
  const double h_drift = max_drift(hom, hs);

  MacroGrid g;
  g.dim = 3;
  g.nodes = 16;
  g.spacing = 4.0 / 16;
  const MacroField sp = make_spatial(m_max, g, [](int n, std::span<const double> x) {
    if (n != 1) return 0.0;
    double r2 = 0.0;
    for (double c : x) r2 += (c - 2.0) * (c - 2.0);
    return 1.0 + std::exp(-r2 / 0.5);
  });
  const double dt = 0.5 * diffusion_dt_limit(g, dd, m_max);
  const auto ss = solve(sp, model, 1.0, dt, obs);
  const double s_drift = max_drift(sp, ss);
  const bool flux = hs.back().ledger.truncation_flux > 0.0 && ss.back().ledger.truncation_flux > 0.0;
  return {h_drift <= 1e-6 && s_drift <= 1e-6,
          "homogeneous drift " + fmt(h_drift, 2) + ", spatial drift " + fmt(s_drift, 2) +
              ", flux " + fmt(hs.back().ledger.truncation_flux) + "/" +
              fmt(ss.back().ledger.truncation_flux) + (flux ? "" : " (no truncation exercised)")};
}

Outcome propensity() {
  const RunConfig cfg = config_from(R"(
params: {dim: 3, big_z: 100, n_particles: 4000, horizon: 0.5, seed: 606, torus_side: 4.641588833612779}
kernel: {shape: plateau}
alpha: {value: 1}
diffusion: {value: 0.5}
sim: {replicas: 20, m_max: 40, count_every: 0, record_events: false, density_samples: 0}
)");
  const auto res = run_replicas(cfg, 20, 1, {false, false});
  std::vector<TrajectoryStats> stats;
  for (const auto& r : res) stats.push_back(r.stats);
  const PropensityReport p = propensity_audit(stats, cfg.params.big_z);
  return {p.bound_ok && p.count_ok,
          "mean rate integral " + fmt(p.mean) + " sem " + fmt(p.sem) + " Z " + fmt(p.z) +
              ", max collisions " + std::to_string(p.max_collisions) + " <= N " +
              std::to_string(p.n_particles)};
}

// Shared runs for the convergence and Stosszahlansatz criteria.
struct LevelRuns {
  RunConfig cfg;
  std::vector<ReplicaResult> replicas;
  double macro_functional = 0.0;
  double macro_count = 0.0;  ///< ∫ f_1 at T
  double beta11 = 0.0;
};

LevelRuns level(std::int64_t n) {
  static std::map<std::int64_t, LevelRuns> cache;
  if (auto it = cache.find(n); it != cache.end()) return it->second;
  LevelRuns out;
  out.cfg = config_from(R"(
params: {dim: 3, big_z: 800, horizon: 0.5, seed: 7070, torus_side: 9.283177667225558, n_particles: )" +
                        std::to_string(n) + R"(}
kernel: {shape: plateau}
alpha: {value: 1}
diffusion: {value: 0.5}
sim: {replicas: 10, m_max: 40, count_every: 0, record_events: false, density_samples: 11, q_sample_every: 100}
pde: {m_max: 40, dt: 0.001}
validate: {functional: cosine, offset: 1, amplitude: 0.5, masses: [1]}
)");
  const RunConfig& cfg = out.cfg;
  out.replicas = run_replicas(cfg, 10, 1, {false, true});
  const MacroField layout = initial_macro_field(cfg);
  MacroModel model{beta_for(cfg), diffusion_policy(cfg), convention(cfg)};
  out.beta11 = model.beta(1, 1);
  const auto snaps = solve(layout, model, cfg.params.horizon, cfg.pde.dt);
  const double vol = std::pow(cfg.params.torus_side, cfg.params.dim);
  out.macro_functional = macro_functional(layout, snaps.back().f, 1, test_functional(cfg),
                                          cfg.params.dim, cfg.params.torus_side);
  out.macro_count = snaps.back().f[0] * vol;
  cache[n] = out;
  return out;
}

Outcome convergence() {
  const LevelRuns coarse = level(2000), fine = level(16000);
  int improved = 0;
  std::vector<double> ec, ef;
  for (int k = 0; k < 10; ++k) {
    const double a = std::abs(coarse.replicas[k].functional.at(1) - coarse.macro_functional);
    const double b = std::abs(fine.replicas[k].functional.at(1) - fine.macro_functional);
    ec.push_back(a);
    ef.push_back(b);
    improved += b < a;
  }
  const double eps = fine.cfg.params.epsilon;
  double count = 0.0;
  for (const auto& r : fine.replicas) count += eps * r.stats.counts.back().counts[0];
  count /= fine.replicas.size();
  const double rel = std::abs(count - fine.macro_count) / fine.macro_count;
  return {improved >= 8 && median(ef) < median(ec) && rel <= 0.2,
          "improved in " + std::to_string(improved) + "/10 pairings, median error " +
              fmt(median(ec)) + " -> " + fmt(median(ef)) + "; N=16000 mass-1 count " +
              fmt(count) + " vs ODE " + fmt(fine.macro_count) + " (rel " + fmt(rel, 3) + ")"};
}

Outcome stosszahl() {
  const LevelRuns coarse = level(2000), fine = level(16000);
  auto gaps = [](const LevelRuns& l, double& lhs, double& rhs) {
    std::vector<double> g;
    lhs = rhs = 0.0;
    for (const auto& r : l.replicas) {
      const auto d = stosszahlansatz_check(r.stats.q_integral, r.samples, l.beta11);
      g.push_back(d.gap);
      lhs += d.lhs;
      rhs += d.rhs;
    }
    lhs /= l.replicas.size();
    rhs /= l.replicas.size();
    return g;
  };
  double lc, rc, lf, rf;
  const auto gc = gaps(coarse, lc, rc);
  const auto gf = gaps(fine, lf, rf);
  const double pooled = std::abs(lf - rf) / lf;
  return {pooled <= 0.30 && median(gf) < median(gc),
          "N=16000 lhs " + fmt(lf) + " rhs " + fmt(rf) + " gap " + fmt(pooled, 3) +
              "; median gap " + fmt(median(gc), 3) + " (N=2000) -> " + fmt(median(gf), 3)};
}

Outcome effective_rate() {
  const RunConfig cfg = config_from(R"(
params: {dim: 3, big_z: 50, n_particles: 2000, tau_factor: 0.004, horizon: 0.1, seed: 808, torus_side: 5.848035476425731}
kernel: {shape: plateau}
alpha: {value: 1000}
diffusion: {value: 0.5}
sim: {replicas: 10, m_max: 40, count_every: 250, record_events: false, density_samples: 0}
)");
  const auto res = run_replicas(cfg, 10, 1, {false, false});
  std::vector<CountSeries> series;
  std::int64_t collisions = 0;
  for (const auto& r : res) {
    CountSeries s;
    for (const auto& row : r.stats.counts) {
      s.t.push_back(row.t);
      s.count.push_back(static_cast<double>(row.counts[0]));
    }
    series.push_back(std::move(s));
    collisions += r.stats.collision_count;
  }
  const KernelV v = kernel(cfg);
  const double alpha = alpha_policy(cfg)(1, 1);
  const double beta =
      compute_beta(1, 1, v, alpha_policy(cfg), diffusion_policy(cfg), cell_grid(cfg, v)).beta;
  const double scale = cfg.params.epsilon / std::pow(cfg.params.torus_side, 3);
  const RateFitReport fit = effective_rate_experiment(series, scale, cfg.params.horizon, alpha,
                                                      beta, collisions, 1000, 808, 0.25);
  return {fit.rel_to_beta <= 0.25 && alpha / fit.c >= 2.0,
          "fitted " + fmt(fit.c) + " [" + fmt(fit.ci_lo) + "," + fmt(fit.ci_hi) + "], beta " +
              fmt(beta) + " (rel " + fmt(fit.rel_to_beta, 3) + "), alpha " + fmt(alpha) +
              ", collisions " + std::to_string(collisions)};
}

Outcome diffusion_calibration() {
  const DiffusionPolicy dd = DiffusionPolicy::power(0.5, -1.0 / 3.0);
  Configuration c;
  c.dim = 3;
  for (std::uint32_t m : {1u, 2u, 4u, 8u}) {
    Particle p;
    p.id = m;
    p.mass = m;
    c.particles.push_back(p);
  }
  Philox4x32 rng(1010);
  const double tau = 1e-3;
  const int steps = 100000;
  std::vector<double> sq(c.particles.size(), 0.0);
  for (int s = 0; s < steps; ++s) {
    const auto prev = c.particles;
    diffuse(c, dd, tau, rng);
    for (std::size_t i = 0; i < sq.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        const double z = c.particles[i].pos[a] - prev[i].pos[a];
        sq[i] += z * z;
      }
    }
  }
  Outcome o{true, ""};
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double m = c.particles[i].mass;
    const double ratio = sq[i] / (3.0 * steps * tau) / (2.0 * dd(m));
    o.pass = o.pass && std::abs(ratio - 1.0) <= 0.02;
    o.detail += "m=" + fmt(m) + " MSD/(2dt)=" + fmt(ratio, 5) + " ";
  }
  return o;
}

bool pairs_match(std::uint64_t seed) {
  Philox4x32 rng(seed);
  const int dim = 3 + static_cast<int>(rng.below(2));
  const int n = 200 + static_cast<int>(rng.below(1801));
  const double side = 4.0 + 4.0 * rng.uniform();
  const double eps = 0.1 + 0.4 * rng.uniform();
  Configuration c;
  c.dim = dim;
  c.epsilon = eps;
  c.domain = seed % 2 ? Domain::torus(side) : Domain::free();
  for (int i = 0; i < n; ++i) {
    Particle p;
    p.id = static_cast<std::uint64_t>(i);
    for (int a = 0; a < dim; ++a) p.pos[a] = side * rng.uniform();
    c.particles.push_back(p);
  }
  SpatialHash hash(dim, eps, c.domain);
  auto key = [](const std::vector<PairCandidate>& v) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> s;
    for (const auto& p : v) s.insert({p.a, p.b});
    return s;
  };
  const auto fast = detect_pairs(c, hash);
  const auto slow = brute_force_pairs(c.particles, dim, eps, c.domain);
  return fast.size() == slow.size() && key(fast) == key(slow);
}

std::string run_fingerprint(const RunConfig& cfg, int workers) {
  const auto res = run_replicas(cfg, 3, workers, {true, true});
  std::string s;
  for (const auto& r : res) {
    for (const auto& e : r.stats.events) s += event_line(e, cfg.params.dim, r.index);
    s += hash_hex(config_digest(*r.final_state)) + "\n";
    for (const auto& q : r.samples) s += format_double(q.integrand) + "\n";
  }
  return s;
}

Outcome structural() {
  int pair_ok = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) pair_ok += pairs_match(seed);

  double merge_err = 0.0;
  for (auto [ma, mb] : {std::pair{1u, 1u}, std::pair{3u, 1u}, std::pair{2u, 5u}}) {
    Philox4x32 rng(77 + ma + 10 * mb);
    int first = 0;
    for (int t = 0; t < 10000; ++t) {
      Configuration c;
      c.dim = 3;
      Particle a, b;
      a.id = 0;
      a.mass = ma;
      b.id = 1;
      b.mass = mb;
      b.pos[0] = 0.5;
      c.particles = {a, b};
      c.next_id = 2;
      first += merge(c, 0, 1, rng).chose_first;
    }
    merge_err = std::max(merge_err, std::abs(first / 1e4 - double(ma) / (ma + mb)));
  }

  const RunConfig cfg = config_from(R"(
params: {dim: 3, big_z: 20, n_particles: 500, horizon: 0.1, seed: 1111, torus_side: 2.7}
alpha: {value: 2}
sim: {m_max: 10, density_samples: 3}
validate: {functional: cosine, offset: 1, amplitude: 0.5}
)");
  const std::string a = run_fingerprint(cfg, 1);
  const bool deterministic = a == run_fingerprint(cfg, 1) && a == run_fingerprint(cfg, 2) &&
                             a.find("\"t\"") != std::string::npos;

  // Nonincreasing d: the hypothesis is γ(n, m)/m nonincreasing in m.
  bool eq1 = true;
  const DiffusionPolicy dec = DiffusionPolicy::power(1.0, -0.4);
  auto table = [](auto g) {
    std::vector<std::vector<double>> t(12, std::vector<double>(12));
    for (int n = 1; n <= 12; ++n) {
      for (int m = 1; m <= 12; ++m) t[n - 1][m - 1] = g(double(n), double(m));
    }
    return t;
  };
  const std::vector<std::vector<std::vector<double>>> rates{
      table([](double n, double m) { return n * m; }),
      table([](double, double) { return 2.0; }),
      table([](double n, double m) { return std::sqrt(n * m); }),
      table([](double n, double m) { return n + m; }),
      table([](double n, double m) { return n * n * m * m; }),
      table([](double n, double m) { return std::pow(n * m, 1.5); })};
  for (const auto& t : rates) {
    bool expected = true;
    for (int n = 0; n < 12; ++n) {
      for (int m = 1; m < 12; ++m) expected = expected && t[n][m] / (m + 1) <= t[n][m - 1] / m * (1 + 1e-12);
    }
    eq1 = eq1 && check_hypothesis(3, RatePolicy::table(t), dec, 12).holds == expected;
  }
  // Constant α: d(n) n^{1/(2-3d)} nonincreasing, on the worked exponents.
  bool eq2 = true;
  for (double p : {-0.5, -1.0 / 7.0, 0.0, 1.0 / 7.0, 0.5, 1.0}) {
    const bool expected = p <= 1.0 / 7.0 + 1e-12;
    eq2 = eq2 && check_hypothesis(3, RatePolicy::constant(1.0), DiffusionPolicy::power(1.0, p), 25).holds == expected;
  }

  return {pair_ok == 50 && merge_err <= 0.02 && deterministic && eq1 && eq2,
          "pairs " + std::to_string(pair_ok) + "/50, merge max dev " + fmt(merge_err, 3) +
              ", determinism " + (deterministic ? "ok" : "broken") + ", equivalences " +
              (eq1 ? "ok" : "broken") + "/" + (eq2 ? "ok" : "broken")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "cell-problem bounds", 30, cell_bounds},
      {2, "capacity limit", 120, capacity_limit},
      {3, "rate recipe sanity", 120, rate_recipe},
      {4, "ODE oracle equivalence", 10, ode_oracle},
      {5, "mass conservation", 60, mass_conservation},
      {6, "collision propensity", 300, propensity},
      {7, "micro-macro convergence", 1200, convergence},
      {8, "effective-rate discrimination", 900, effective_rate},
      {9, "Stosszahlansatz diagnostic", 1200, stosszahl},
      {10, "diffusion calibration", 10, diffusion_calibration},
      {11, "structural properties", 300, structural},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs < c.limit_s;
    failed += !pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (pass ? "PASS" : "FAIL")
              << "  " << o.detail << " [" << fmt(secs, 3) << " s, limit " << c.limit_s << " s]"
              << std::endl;
  }
  return failed ? 1 : 0;
}
