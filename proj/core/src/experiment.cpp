#include "coag/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace coag {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void note(const ExperimentOptions& opt, const std::string& msg) {
  if (opt.log) *opt.log << msg << '\n';
}

ArtifactHeader header_for(const RunConfig& cfg, const std::string& kind) {
  return ArtifactHeader{kind, tool_version(), config_hash(cfg), model_hash(cfg)};
}

double torus_volume(const RunConfig& cfg) {
  return cfg.params.torus_side > 0.0 ? std::pow(cfg.params.torus_side, cfg.params.dim) : 1.0;
}

std::vector<double> density_times(const RunConfig& cfg) {
  std::vector<double> t;
  const int n = cfg.sim.density_samples;
  for (int k = 0; k < n; ++k) t.push_back(cfg.params.horizon * k / (n - 1));
  return t;
}

double delta_for(const RunConfig& cfg) {
  return cfg.sim.delta > 0.0 ? cfg.sim.delta
                             : default_delta(cfg.params.epsilon, cfg.params.torus_side);
}

DensityGrid density_grid(const RunConfig& cfg) {
  const double delta = delta_for(cfg);
  int nodes = cfg.sim.density_nodes;
  if (nodes == 0) nodes = std::max(8, static_cast<int>(std::ceil(3.0 * cfg.params.torus_side / delta)));
  return DensityGrid::torus(cfg.params.dim, cfg.params.torus_side, nodes);
}

}  // namespace

ReplicaResult run_replica(const RunConfig& cfg, int k, const ReplicaOptions& options) {
  ReplicaResult out;
  out.index = k;
  out.seed = replica_seed(cfg.params.seed, static_cast<std::uint64_t>(k));
  const MicroModel model = micro_model(cfg);
  const InitialDensities h = initial_densities(cfg);
  Philox4x32 rng(out.seed);
  Configuration state = sample_initial(h, model.params, model.domain, rng);

  const TestFunctional j = test_functional(cfg);
  RunOptions ro;
  ro.record_events = cfg.sim.record_events;
  ro.count_every = cfg.sim.count_every;
  ro.q_sample_every = cfg.sim.q_sample_every;
  ro.cells_per_particle = cfg.sim.cells_per_particle;
  const bool sample = options.stosszahl && cfg.sim.density_samples > 0;
  QSpec q{cfg.sim.q_m1, cfg.sim.q_m2, j, j};
  if (sample) {
    ro.q = q;
    ro.observe_times = density_times(cfg);
    const double delta = delta_for(cfg);
    auto eta = std::make_shared<Mollifier>(cfg.params.dim);
    auto grid = std::make_shared<DensityGrid>(density_grid(cfg));
    ro.observer = [&out, q, delta, eta, grid](const Configuration& c) {
      out.samples.push_back({c.time, stosszahl_integrand(c, q, delta, *eta, *grid)});
    };
  }
  out.stats = run(state, model, rng, ro);
  for (int m : cfg.validate.masses) out.functional[m] = micro_functional(state, m, j);
  if (options.keep_final) out.final_state = std::move(state);
  return out;
}

std::vector<ReplicaResult> run_replicas(const RunConfig& cfg, int count, int workers,
                                        const ReplicaOptions& options) {
  std::vector<ReplicaResult> results(std::max(count, 0));
  if (count <= 0) return results;
  workers = std::clamp(workers, 1, count);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (true) {
      const int k = next.fetch_add(1);
      if (k >= count) return;
      try {
        results[k] = run_replica(cfg, k, options);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return results;
}

MacroField initial_macro_field(const RunConfig& cfg) {
  const int m_max = cfg.pde.m_max;
  const InitialDensities h = initial_densities(cfg);
  const double side = cfg.params.torus_side;
  if (cfg.pde.mode == "homogeneous") {
    if (!(side > 0.0)) throw MacroError("homogeneous mode needs params.torus_side");
    std::vector<double> f0(m_max, 0.0);
    const double vol = torus_volume(cfg);
    for (const auto& c : h.components()) {
      if (c.mass <= m_max) f0[c.mass - 1] += c.intensity / vol;
    }
    return make_homogeneous(m_max, f0);
  }
  MacroGrid g;
  g.dim = cfg.params.dim;
  g.nodes = cfg.pde.nodes;
  g.spacing = side / cfg.pde.nodes;
  g.boundary = cfg.pde.boundary == "torus" ? Boundary::torus : Boundary::zero_flux;
  return make_spatial(m_max, g, [&](int n, std::span<const double> x) {
    return h.density(n, x, g.boundary == Boundary::torus ? side : 0.0);
  });
}

BetaMatrix beta_for(const RunConfig& cfg, int m_max, std::vector<BetaResult>* rows) {
  const KernelV v = kernel(cfg);
  return beta_matrix(m_max > 0 ? m_max : cfg.pde.m_max, v, alpha_policy(cfg),
                     diffusion_policy(cfg), cell_grid(cfg, v), cfg.cell.tol, rows);
}

std::string to_string(Check::Status s) {
  switch (s) {
    case Check::Status::pass: return "PASS";
    case Check::Status::fail: return "FAIL";
    case Check::Status::skipped: return "SKIP";
  }
  return "?";
}

bool ValidationReport::any_fail() const {
  return std::any_of(checks.begin(), checks.end(),
                     [](const Check& c) { return c.status == Check::Status::fail; });
}

namespace {

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_cell_problem(const RunConfig& cfg, const fs::path& dir, const ExperimentOptions& opt) {
  std::vector<BetaResult> rows;
  const int size = cfg.cell.table_size;
  const BetaMatrix beta = beta_for(cfg, size, &rows);
  const KernelV v = kernel(cfg);
  const DiffusionPolicy dd = diffusion_policy(cfg);
  const double cap = capacity_of_support(v).value;
  CsvBuilder csv(header_for(cfg, "beta_table"),
                 {"n", "m", "alpha", "alpha_prime", "beta", "residual", "capacity_bound"});
  for (const auto& r : rows) {
    csv.row({format_int(r.n), format_int(r.m), format_double(r.alpha),
             format_double(r.alpha_prime), format_double(r.beta), format_double(r.residual),
             format_double((dd(r.n) + dd(r.m)) * cap)});
  }
  write_text_file(dir / "beta_table.csv", csv.str());
  note(opt, "cell-problem: " + std::to_string(rows.size()) + " entries, beta(1,1) = " +
                format_double(beta(1, 1)));
}

void stage_capacity_curve(const RunConfig& cfg, const fs::path& dir,
                          const ExperimentOptions& opt) {
  const KernelV v = kernel(cfg);
  auto alphas = cfg.cell.capacity_alphas;
  std::sort(alphas.begin(), alphas.end());
  const auto curve = effective_rate_curve(v, 1.0, alphas, cell_grid(cfg, v), cfg.cell.tol);
  const double cap = capacity_of_support(v).value;
  CsvBuilder csv(header_for(cfg, "f_curve"), {"beta_param", "f", "f_over_capacity", "residual"});
  for (const auto& p : curve) {
    csv.row({format_double(p.beta_param), format_double(p.f), format_double(p.f / cap),
             format_double(p.residual)});
  }
  write_text_file(dir / "f_curve.csv", csv.str());
  note(opt, "capacity-curve: " + std::to_string(curve.size()) + " points, capacity " +
                format_double(cap));
}

void write_simulation(const RunConfig& cfg, const fs::path& dir,
                      const std::vector<ReplicaResult>& results) {
  const int m_max = cfg.sim.m_max;
  const int dim = cfg.params.dim;

  std::vector<std::string> cols{"replica", "t"};
  for (int n = 1; n <= m_max; ++n) cols.push_back("n" + std::to_string(n));
  cols.push_back("overflow");
  CsvBuilder counts(header_for(cfg, "counts"), cols);

  CsvBuilder reps(header_for(cfg, "replicas"),
                  {"replica", "seed", "initial_count", "final_count", "collisions",
                   "rate_integral", "q_integral", "steps", "max_overflow"});
  CsvBuilder stoss(header_for(cfg, "stosszahl"), {"replica", "t", "integrand"});
  CsvBuilder func(header_for(cfg, "functional"), {"replica", "t", "mass", "value"});
  CsvBuilder qs(header_for(cfg, "q_series"), {"replica", "t", "q"});
  std::string events = jsonl_header(header_for(cfg, "events"));

  for (const auto& r : results) {
    const std::string rk = std::to_string(r.index);
    for (const auto& row : r.stats.counts) {
      std::vector<std::string> cells{rk, format_double(row.t)};
      for (auto c : row.counts) cells.push_back(format_int(c));
      counts.row(cells);
    }
    reps.row({rk, std::to_string(r.seed), format_int(r.stats.initial_count),
              format_int(r.stats.final_count), format_int(r.stats.collision_count),
              format_double(r.stats.rate_integral), format_double(r.stats.q_integral),
              format_int(r.stats.steps), format_int(r.stats.max_overflow_seen)});
    for (const auto& s : r.samples) stoss.row({rk, format_double(s.t), format_double(s.integrand)});
    for (const auto& [m, v] : r.functional) {
      func.row({rk, format_double(cfg.params.horizon), format_int(m), format_double(v)});
    }
    for (const auto& s : r.stats.q_series) qs.row({rk, format_double(s.t), format_double(s.q)});
    for (const auto& e : r.stats.events) events += event_line(e, dim, r.index);
  }
  write_text_file(dir / "counts.csv", counts.str());
  write_text_file(dir / "replicas.csv", reps.str());
  write_text_file(dir / "stosszahl.csv", stoss.str());
  write_text_file(dir / "functional.csv", func.str());
  write_text_file(dir / "q_series.csv", qs.str());
  write_text_file(dir / "events.jsonl", events);
}

void write_density(const RunConfig& cfg, const fs::path& dir, const Configuration& state) {
  if (!(cfg.params.torus_side > 0.0) || cfg.sim.density_samples == 0) return;
  const DensityGrid grid = density_grid(cfg);
  const Mollifier eta(cfg.params.dim);
  const auto field = empirical_density(state, cfg.sim.q_m1, delta_for(cfg), eta, grid);
  std::vector<std::string> cols;
  for (int a = 0; a < grid.dim; ++a) cols.push_back("x" + std::to_string(a));
  cols.push_back("f");
  CsvBuilder csv(header_for(cfg, "density"), cols);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.point(k);
    std::vector<std::string> cells;
    for (int a = 0; a < grid.dim; ++a) cells.push_back(format_double(x[a]));
    cells.push_back(format_double(field[k]));
    csv.row(cells);
  }
  // j indexes the density sample; the final state is the last one.
  const std::string name = "density_n" + std::to_string(cfg.sim.q_m1) + "_t" +
                           std::to_string(std::max(cfg.sim.density_samples - 1, 0)) + ".csv";
  write_text_file(dir / name, csv.str());
}

void stage_simulate(const RunConfig& cfg, const fs::path& dir, int workers,
                    const ExperimentOptions& opt) {
  ReplicaOptions ro;
  ro.keep_final = true;
  auto results = run_replicas(cfg, cfg.sim.replicas, workers, ro);
  write_simulation(cfg, dir, results);
  if (!results.empty() && results.front().final_state) {
    write_density(cfg, dir, *results.front().final_state);
  }
  note(opt, "simulate: " + std::to_string(results.size()) + " replicas");
}

void stage_pde(const RunConfig& cfg, const fs::path& dir, const ExperimentOptions& opt) {
  MacroModel model{beta_for(cfg), diffusion_policy(cfg), convention(cfg)};
  MacroField field = initial_macro_field(cfg);
  const double horizon = cfg.params.horizon;
  std::vector<double> times;
  constexpr int kRows = 100;
  for (int k = 1; k < kRows; ++k) times.push_back(horizon * k / kRows);
  for (double t : cfg.pde.observe_times) times.push_back(t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const auto snaps = solve(field, model, horizon, cfg.pde.dt, times);

  const double vol = field.grid ? 1.0 : torus_volume(cfg);
  const int m_max = field.m_max;
  std::vector<std::string> cols{"t", "total_mass", "truncation_flux", "clipped"};
  for (int n = 1; n <= m_max; ++n) cols.push_back("f" + std::to_string(n));
  CsvBuilder csv(header_for(cfg, "macro_counts"), cols);
  MacroField probe = field;
  for (const auto& s : snaps) {
    probe.f = s.f;
    std::vector<std::string> cells{format_double(s.t), format_double(probe.total_mass() * vol),
                                   format_double(s.ledger.truncation_flux * vol),
                                   format_double(s.ledger.clipped * vol)};
    for (double v : probe.mass_totals()) cells.push_back(format_double(v * vol));
    csv.row(cells);
  }
  write_text_file(dir / "macro_counts.csv", csv.str());

  if (field.grid) {
    const MacroGrid& g = *field.grid;
    auto write_grid = [&](const MacroSnapshot& s, const std::string& name) {
      std::vector<std::string> gc;
      for (int a = 0; a < g.dim; ++a) gc.push_back("x" + std::to_string(a));
      for (int n = 1; n <= m_max; ++n) gc.push_back("f" + std::to_string(n));
      CsvBuilder grid_csv(header_for(cfg, "macro_grid"), gc);
      for (std::size_t k = 0; k < g.size(); ++k) {
        const auto x = g.point(k);
        std::vector<std::string> cells;
        for (int a = 0; a < g.dim; ++a) cells.push_back(format_double(x[a]));
        for (int n = 1; n <= m_max; ++n) cells.push_back(format_double(s.f[k * m_max + n - 1]));
        grid_csv.row(cells);
      }
      write_text_file(dir / name, grid_csv.str());
    };
    int idx = 0;
    for (const auto& s : snaps) {
      const bool observed = std::any_of(cfg.pde.observe_times.begin(), cfg.pde.observe_times.end(),
                                        [&](double t) { return std::abs(t - s.t) < 1e-12; });
      if (observed) write_grid(s, "macro_grid_t" + std::to_string(idx++) + ".csv");
    }
    write_grid(snaps.back(), "macro_grid_final.csv");
  }
  note(opt, "pde: " + std::to_string(snaps.size()) + " snapshots, final mass " +
                format_double(snaps.back().ledger.current));
}

// ---------------------------------------------------------------------------
// Validation from artifacts
// ---------------------------------------------------------------------------

CsvTable load(const fs::path& dir, const std::string& name, const RunConfig& cfg) {
  CsvTable t = read_csv(dir / name);
  if (t.header.model_hash != model_hash(cfg)) {
    throw ValidationError(name + " was produced from a different model configuration (model " +
                          hash_hex(t.header.model_hash) + ", expected " +
                          hash_hex(model_hash(cfg)) + ")");
  }
  return t;
}

Check macro_conservation_check(const CsvTable& macro, double tol) {
  Check c;
  c.name = "macro_mass_conservation";
  if (macro.rows.empty()) return c;
  const double initial = macro.number(0, "total_mass");
  double worst = 0.0, clipped = 0.0;
  for (std::size_t r = 0; r < macro.rows.size(); ++r) {
    const double m = macro.number(r, "total_mass");
    const double flux = macro.number(r, "truncation_flux");
    const double clip = macro.number(r, "clipped");
    worst = std::max(worst, std::abs(m + flux - clip - initial) / initial);
    clipped = std::max(clipped, clip / initial);
  }
  c.values = {{"max_relative_drift", worst}, {"clipped_fraction", clipped}, {"tolerance", tol}};
  c.status = worst <= tol ? Check::Status::pass : Check::Status::fail;
  return c;
}

double macro_value_at(const CsvTable& macro, double t, const std::string& column) {
  for (std::size_t r = 0; r < macro.rows.size(); ++r) {
    if (std::abs(macro.number(r, "t") - t) <= 1e-9 * (1.0 + std::abs(t))) {
      return macro.number(r, column);
    }
  }
  throw ValidationError("macro_counts.csv has no row at t = " + format_double(t));
}

}  // namespace

ValidationReport validate_artifacts(const RunConfig& cfg, const fs::path& dir) {
  ValidationReport report;
  report.header = header_for(cfg, "report");
  const CsvTable macro = load(dir, "macro_counts.csv", cfg);
  const CsvTable counts = load(dir, "counts.csv", cfg);
  const CsvTable reps = load(dir, "replicas.csv", cfg);
  const CsvTable stoss = load(dir, "stosszahl.csv", cfg);
  const CsvTable func = load(dir, "functional.csv", cfg);
  const auto& v = cfg.validate;
  const double horizon = cfg.params.horizon;
  const double eps_d2 = std::pow(cfg.params.epsilon, cfg.params.dim - 2);
  const int replicas = static_cast<int>(reps.rows.size());

  report.checks.push_back(macro_conservation_check(macro, v.conservation_tolerance));

  // propensity and counting identity
  {
    std::vector<TrajectoryStats> stats(replicas);
    for (int r = 0; r < replicas; ++r) {
      stats[r].rate_integral = reps.number(r, "rate_integral");
      stats[r].collision_count = static_cast<std::int64_t>(reps.number(r, "collisions"));
      stats[r].initial_count = static_cast<std::int64_t>(reps.number(r, "initial_count"));
    }
    Check c;
    c.name = "propensity_bound";
    if (replicas >= 5) {
      const PropensityReport p = propensity_audit(stats, cfg.params.big_z);
      c.values = {{"mean_rate_integral", p.mean}, {"sem", p.sem}, {"z", p.z},
                  {"replicas", static_cast<double>(p.replicas)}};
      c.status = p.bound_ok ? Check::Status::pass : Check::Status::fail;
    } else {
      c.note = "needs at least 5 replicas";
    }
    report.checks.push_back(c);
    Check k;
    k.name = "collision_count";
    if (replicas > 0) {
      bool ok = true;
      double worst = 0.0;
      for (const auto& s : stats) {
        ok = ok && s.collision_count <= s.initial_count;
        worst = std::max(worst, static_cast<double>(s.collision_count) / s.initial_count);
      }
      k.values = {{"max_collisions_over_n", worst}};
      k.status = ok ? Check::Status::pass : Check::Status::fail;
    }
    report.checks.push_back(k);
  }

  // mass counts against the macro solution at T
  for (int n : v.masses) {
    Check c;
    c.name = "count_mass_" + std::to_string(n);
    const std::string col = "n" + std::to_string(n);
    if (replicas > 0 && n <= cfg.sim.m_max && n <= cfg.pde.m_max) {
      std::vector<double> micro;
      for (std::size_t r = 0; r < counts.rows.size(); ++r) {
        if (std::abs(counts.number(r, "t") - horizon) <= 1e-9 * (1.0 + horizon)) {
          micro.push_back(eps_d2 * counts.number(r, col));
        }
      }
      const double target = macro_value_at(macro, horizon, "f" + std::to_string(n));
      const ComparisonRow row = compare_values(micro, target, n, horizon);
      const double rel = target != 0.0 ? std::abs(row.micro - target) / std::abs(target)
                                       : std::abs(row.micro);
      c.values = {{"micro", row.micro}, {"macro", target}, {"relative_error", rel},
                  {"sem", row.spread}, {"tolerance", v.count_tolerance}};
      c.status = rel <= v.count_tolerance ? Check::Status::pass : Check::Status::fail;
    } else {
      c.note = "no replicas or mass above m_max";
    }
    report.checks.push_back(c);
  }

  // test functional (non-constant J)
  if (v.functional != "constant" && replicas > 0) {
    const TestFunctional j = test_functional(cfg);
    MacroField layout = initial_macro_field(cfg);
    std::vector<double> f_final;
    if (layout.grid) {
      const CsvTable grid = load(dir, "macro_grid_final.csv", cfg);
      f_final.assign(layout.f.size(), 0.0);
      for (std::size_t k = 0; k < grid.rows.size(); ++k) {
        for (int n = 1; n <= layout.m_max; ++n) {
          f_final[k * layout.m_max + n - 1] = grid.number(k, "f" + std::to_string(n));
        }
      }
    } else {
      const double vol = torus_volume(cfg);
      for (int n = 1; n <= layout.m_max; ++n) {
        f_final.push_back(macro_value_at(macro, horizon, "f" + std::to_string(n)) / vol);
      }
    }
    for (int n : v.masses) {
      Check c;
      c.name = "functional_mass_" + std::to_string(n);
      std::vector<double> micro;
      for (std::size_t r = 0; r < func.rows.size(); ++r) {
        if (static_cast<int>(func.number(r, "mass")) == n) micro.push_back(func.number(r, "value"));
      }
      const double target =
          macro_functional(layout, f_final, n, j, cfg.params.dim, cfg.params.torus_side);
      const ComparisonRow row = compare_values(micro, target, n, horizon);
      const double rel = target != 0.0 ? std::abs(row.micro - target) / std::abs(target)
                                       : std::abs(row.micro);
      c.values = {{"micro", row.micro}, {"macro", target}, {"relative_error", rel},
                  {"mean_abs_error", row.abs_error}, {"tolerance", v.count_tolerance}};
      c.note = j.describe();
      c.status = rel <= v.count_tolerance ? Check::Status::pass : Check::Status::fail;
      report.checks.push_back(c);
    }
  }

  // Stosszahlansatz
  {
    Check c;
    c.name = "stosszahlansatz";
    if (replicas > 0 && !stoss.rows.empty()) {
      const KernelV kv = kernel(cfg);
      const double beta = compute_beta(cfg.sim.q_m1, cfg.sim.q_m2, kv, alpha_policy(cfg),
                                       diffusion_policy(cfg), cell_grid(cfg, kv), cfg.cell.tol)
                              .beta;
      double lhs = 0.0, rhs = 0.0;
      for (int r = 0; r < replicas; ++r) {
        std::vector<StosszahlSample> samples;
        for (std::size_t k = 0; k < stoss.rows.size(); ++k) {
          if (static_cast<int>(stoss.number(k, "replica")) == r) {
            samples.push_back({stoss.number(k, "t"), stoss.number(k, "integrand")});
          }
        }
        const auto d = stosszahlansatz_check(reps.number(r, "q_integral"), samples, beta);
        lhs += d.lhs;
        rhs += d.rhs;
      }
      lhs /= replicas;
      rhs /= replicas;
      const double gap = lhs != 0.0 ? std::abs(lhs - rhs) / std::abs(lhs) : 0.0;
      c.values = {{"lhs", lhs}, {"rhs", rhs}, {"gap", gap}, {"beta", beta},
                  {"delta", delta_for(cfg)}, {"tolerance", v.stosszahl_tolerance}};
      c.status = gap <= v.stosszahl_tolerance ? Check::Status::pass : Check::Status::fail;
    } else {
      c.note = "no density samples";
    }
    report.checks.push_back(c);
  }

  // effective rate
  if (v.rate_fit) {
    Check c;
    c.name = "effective_rate";
    std::vector<CountSeries> series(replicas);
    for (std::size_t r = 0; r < counts.rows.size(); ++r) {
      const int k = static_cast<int>(counts.number(r, "replica"));
      series.at(k).t.push_back(counts.number(r, "t"));
      series.at(k).count.push_back(counts.number(r, "n1"));
    }
    std::int64_t collisions = 0;
    for (int r = 0; r < replicas; ++r) collisions += static_cast<std::int64_t>(reps.number(r, "collisions"));
    const KernelV kv = kernel(cfg);
    const RatePolicy alpha = alpha_policy(cfg);
    const double beta = compute_beta(1, 1, kv, alpha, diffusion_policy(cfg), cell_grid(cfg, kv),
                                     cfg.cell.tol)
                            .beta;
    try {
      const RateFitReport fit = effective_rate_experiment(
          series, eps_d2 / torus_volume(cfg), v.fit_window * horizon, alpha(1, 1), beta,
          collisions, v.bootstrap, cfg.params.seed, v.rate_tolerance);
      c.values = {{"c", fit.c},           {"ci_lo", fit.ci_lo},
                  {"ci_hi", fit.ci_hi},   {"alpha", fit.alpha},
                  {"beta", fit.beta},     {"relative_to_beta", fit.rel_to_beta},
                  {"separation", fit.separation},
                  {"collisions", static_cast<double>(fit.collisions)}};
      c.status = fit.pass ? Check::Status::pass : Check::Status::fail;
    } catch (const ValidationError& e) {
      c.status = Check::Status::fail;
      c.note = e.what();
    }
    report.checks.push_back(c);
  }
  return report;
}

std::string report_json(const ValidationReport& report) {
  json j;
  j["coaglab"] = report.header.version;
  j["config"] = hash_hex(report.header.config_hash);
  j["model"] = hash_hex(report.header.model_hash);
  json checks = json::array();
  for (const auto& c : report.checks) {
    json e;
    e["name"] = c.name;
    e["status"] = to_string(c.status);
    e["values"] = c.values;
    if (!c.note.empty()) e["note"] = c.note;
    checks.push_back(e);
  }
  j["checks"] = checks;
  j["overall"] = report.any_fail() ? "FAIL" : "PASS";
  return j.dump(2) + "\n";
}

int run_experiment(RunConfig cfg, const ExperimentOptions& options) {
  if (options.seed) cfg.params.seed = *options.seed;
  const fs::path dir = options.out.empty() ? fs::path(cfg.out) : options.out;
  const int workers = options.workers > 0 ? options.workers : cfg.workers;
  fs::create_directories(dir);
  const fs::path marker = dir / "_incomplete";
  write_text_file(marker, "coaglab " + cfg.command + " started\n");
  write_text_file(dir / "config.json", serialize(cfg));

  const std::string& cmd = cfg.command;
  int status = 0;
  if ((cmd == "simulate" || cmd == "full") && cfg.sim.replicas == 0) {
    write_simulation(cfg, dir, {});
    note(options, "simulate: 0 replicas, empty artifacts written");
    fs::remove(marker);
    return 0;
  }
  if (cmd == "cell-problem" || cmd == "full") stage_cell_problem(cfg, dir, options);
  if (cmd == "capacity-curve" || cmd == "full") stage_capacity_curve(cfg, dir, options);
  if (cmd == "simulate" || cmd == "full") stage_simulate(cfg, dir, workers, options);
  if (cmd == "pde" || cmd == "full") stage_pde(cfg, dir, options);
  if (cmd == "validate" || cmd == "full") {
    const ValidationReport report = validate_artifacts(cfg, dir);
    write_text_file(dir / "report.json", report_json(report));
    for (const auto& c : report.checks) {
      std::string line = to_string(c.status) + " " + c.name;
      for (const auto& [k, v] : c.values) line += " " + k + "=" + format_double(v);
      note(options, line);
    }
    status = report.any_fail() ? 1 : 0;
  }
  fs::remove(marker);
  return status;
}

}  // namespace coag
