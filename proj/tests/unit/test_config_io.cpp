#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "coag/config.hpp"
#include "coag/experiment.hpp"
#include "coag/io.hpp"

using namespace coag;
namespace fs = std::filesystem;

namespace {

ParseOptions no_env() {
  ParseOptions o;
  o.env_overrides = false;
  return o;
}

RunConfig parse(const std::string& text) { return parse_config_text(text, "<string>", no_env()); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("coaglab_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmall = R"(params:
  dim: 3
  big_z: 10
  n_particles: 300
  horizon: 0.05
  seed: 5
  torus_side: 2.2
alpha:
  value: 2
sim:
  replicas: 2
  m_max: 6
  density_samples: 3
pde:
  m_max: 6
  dt: 0.005
cell:
  table_size: 2
  shells: 100
  capacity_alphas: [1, 10]
)";

// Random but valid configuration text.
std::string random_config(Philox4x32& rng) {
  auto pick = [&](std::initializer_list<const char*> xs) {
    return std::string(*(xs.begin() + rng.below(xs.size())));
  };
  auto num = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  std::ostringstream os;
  os.precision(17);
  const int dim = 3 + static_cast<int>(rng.below(2));
  const double z = num(1.0, 500.0);
  const auto n = 100 + static_cast<std::int64_t>(rng.below(100000));
  const double side = num(3.0, 12.0);
  const double horizon = num(0.01, 2.0);
  os << "params:\n  dim: " << dim << "\n  big_z: " << z << "\n  n_particles: " << n
     << "\n  tau_factor: " << num(0.01, 0.1) << "\n  horizon: " << horizon
     << "\n  seed: " << rng() << "\n  torus_side: " << side << "\n";
  const std::string shape = pick({"bump", "plateau", "quadratic", "cone", "ellipsoid"});
  os << "kernel:\n  shape: " << shape << "\n  support_radius: " << num(0.5, 2.0)
     << "\n  edge_width: " << num(0.01, 0.5) << "\n";
  const std::string akind = pick({"constant", "product", "table"});
  os << "alpha:\n  kind: " << akind << "\n  value: " << num(0.0, 100.0) << "\n";
  if (akind == "table") {
    const int k = 1 + static_cast<int>(rng.below(4));
    std::vector<std::vector<double>> t(k, std::vector<double>(k));
    for (int i = 0; i < k; ++i) {
      for (int j = i; j < k; ++j) t[i][j] = t[j][i] = num(0.0, 10.0);
    }
    os << "  table:\n";
    for (const auto& row : t) {
      os << "    - [";
      for (std::size_t j = 0; j < row.size(); ++j) os << (j ? ", " : "") << row[j];
      os << "]\n";
    }
  }
  const std::string dkind = pick({"constant", "power", "exponential"});
  os << "diffusion:\n  kind: " << dkind << "\n  value: " << num(0.1, 2.0)
     << "\n  exponent: " << num(-1.0, 0.0) << "\n  base: " << num(0.5, 1.0) << "\n";
  const double split = num(0.1, 0.9);
  os << "initial:\n  - mass: 1\n    shape: uniform\n    intensity: " << z * split
     << "\n  - mass: " << 2 + rng.below(3) << "\n    shape: gaussian\n    sigma: " << num(0.2, 1.0)
     << "\n    intensity: " << z - z * split << "\n";
  os << "sim:\n  replicas: " << rng.below(20) << "\n  m_max: " << 1 + rng.below(60)
     << "\n  count_every: " << rng.below(100) << "\n  record_events: "
     << (rng.below(2) ? "true" : "false") << "\n  density_samples: " << pick({"0", "2", "11"})
     << "\n";
  const int m_max = 1 + static_cast<int>(rng.below(30));
  os << "pde:\n  m_max: " << m_max << "\n  dt: " << num(1e-4, 1e-2)
     << "\n  convention: " << pick({"pair", "printed"}) << "\n  observe_times: ["
     << horizon * rng.uniform() << "]\n";
  os << "validate:\n  functional: " << pick({"constant", "gaussian", "box", "cosine"})
     << "\n  amplitude: " << num(-2.0, 2.0) << "\n  width: " << num(0.1, 3.0)
     << "\n  masses: [1, 2]\n  rate_fit: " << (rng.below(2) ? "true" : "false") << "\n";
  os << "run:\n  command: " << pick({"full", "simulate", "pde"}) << "\n  out: out/r" << rng.below(1000)
     << "\n  workers: " << 1 + rng.below(8) << "\n";
  return os.str();
}

}  // namespace

TEST(Config, DefaultsAreMaterializedAndIdempotent) {
  const RunConfig a = parse("params:\n  torus_side: 5\n");
  EXPECT_EQ(a.params.dim, 3);
  EXPECT_EQ(a.params.n_particles, 2000);
  EXPECT_NEAR(a.params.epsilon, 0.05, 1e-15);
  ASSERT_EQ(a.initial.size(), 1u);
  EXPECT_EQ(a.initial[0].intensity, 100.0);
  EXPECT_EQ(a.initial[0].hi, std::vector<double>(3, 5.0));
  const std::string s = serialize(a);
  EXPECT_EQ(s.back(), '\n');
  EXPECT_NE(s.find("\"tau_factor\": 0.05"), std::string::npos);
  const RunConfig b = parse(s);
  EXPECT_EQ(serialize(b), s);
  EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, InconsistentParticleCountRejected) {
  EXPECT_THROW(parse("params:\n  big_z: 10\n  n_particles: 1000\n  epsilon: 0.02\n  torus_side: 3\n"),
               ConfigError);
  const RunConfig ok = parse("params:\n  big_z: 10\n  epsilon: 0.01\n  torus_side: 3\n");
  EXPECT_EQ(ok.params.n_particles, 1000);
}

TEST(Config, RoundTripRandomConfigs) {
  Philox4x32 rng(2024);
  for (int k = 0; k < 100; ++k) {
    const std::string text = random_config(rng);
    RunConfig c;
    ASSERT_NO_THROW(c = parse(text)) << text;
    const std::string s = serialize(c);
    const RunConfig back = parse(s);
    EXPECT_EQ(serialize(back), s) << "config " << k;
    EXPECT_TRUE(back == c);
  }
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    parse("params:\n  dim: 3\n  big_zz: 4\n  torus_side: 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.field(), "params.big_zz");
    EXPECT_NE(std::string(e.what()).find("<string>:3:"), std::string::npos) << e.what();
  }
  try {
    parse("params:\n  torus_side: 3\nbogus:\n  x: 1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(Config, AsymmetricTableReportsEntry) {
  try {
    parse("params:\n  torus_side: 3\nalpha:\n  kind: table\n  table:\n    - [1, 2]\n    - [3, 4]\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("asymmetric"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(2,1)"), std::string::npos) << msg;
    EXPECT_EQ(e.line(), 6);
  }
}

TEST(Config, RangeViolations) {
  EXPECT_THROW(parse("params:\n  dim: 2\n  torus_side: 3\n"), ConfigError);
  EXPECT_THROW(parse("params:\n  torus_side: 3\nsim:\n  replicas: -1\n"), ConfigError);
  EXPECT_THROW(parse("params:\n  torus_side: 3\ninitial:\n  - mass: 1\n    intensity: 5\n"),
               ConfigError);
  EXPECT_THROW(parse("params:\n  torus_side: 3\npde:\n  mode: spatial\n  nodes: 64\n  dt: 0.1\n"),
               ConfigError);
}

TEST(Config, EnvironmentAndExplicitOverrides) {
  ::setenv("COAGLAB_PARAMS_SEED", "42", 1);
  ::setenv("COAGLAB_SIM_M_MAX", "7", 1);
  const RunConfig a = parse_config_text("params:\n  torus_side: 3\n");
  ::unsetenv("COAGLAB_PARAMS_SEED");
  ::unsetenv("COAGLAB_SIM_M_MAX");
  EXPECT_EQ(a.params.seed, 42u);
  EXPECT_EQ(a.sim.m_max, 7);
  ParseOptions o = no_env();
  o.overrides["alpha.value"] = "12.5";
  EXPECT_EQ(parse_config_text("params:\n  torus_side: 3\n", "<s>", o).alpha.value, 12.5);
}

TEST(Config, ModelHashIgnoresRunControls) {
  const RunConfig a = parse("params:\n  torus_side: 3\n  seed: 1\n");
  const RunConfig b = parse("params:\n  torus_side: 3\n  seed: 2\nsim:\n  replicas: 9\n");
  const RunConfig c = parse("params:\n  torus_side: 3\nalpha:\n  value: 2\n");
  EXPECT_EQ(model_hash(a), model_hash(b));
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_NE(model_hash(a), model_hash(c));
  EXPECT_EQ(hash_hex(0xabcull), "0000000000000abc");
}

TEST(Io, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_THROW(parse_double("1.0x"), IoError);
}

TEST(Io, CsvHeaderAndRows) {
  ArtifactHeader h{"counts", "9.9.9", 0x1234, 0x99};
  CsvBuilder csv(h, {"t", "n1"});
  csv.row({"0", "10"});
  csv.row({format_double(0.25), "8"});
  EXPECT_EQ(csv.str().find('\r'), std::string::npos);
  const CsvTable t = parse_csv(csv.str());
  EXPECT_EQ(t.header.kind, "counts");
  EXPECT_EQ(t.header.config_hash, 0x1234u);
  EXPECT_EQ(t.header.model_hash, 0x99u);
  EXPECT_EQ(t.number(1, "t"), 0.25);
  EXPECT_THROW(t.column("n2"), IoError);
  EXPECT_THROW(csv.row({"1"}), IoError);
}

TEST(Io, EventsRoundTrip) {
  CollisionEvent e;
  e.t = 0.125;
  e.id_a = 3;
  e.id_b = 9;
  e.mass_a = 2;
  e.mass_b = 1;
  e.new_id = 40;
  e.new_pos = {0.1, 0.2, 1.0 / 3.0};
  e.chose_first = false;
  const std::string text = jsonl_header({"events", "", 5, 6}) + event_line(e, 3, 1);
  const EventLog log = parse_events(text, 3);
  ASSERT_EQ(log.events.size(), 1u);
  EXPECT_EQ(log.header.config_hash, 5u);
  EXPECT_EQ(log.replicas[0], 1);
  EXPECT_EQ(log.events[0].new_pos, e.new_pos);
  EXPECT_FALSE(log.events[0].chose_first);
  EXPECT_EQ(event_line(log.events[0], 3, 1), event_line(e, 3, 1));
}

TEST(Experiment, ZeroReplicasWritesEmptyArtifacts) {
  RunConfig cfg = parse(kSmall);
  cfg.sim.replicas = 0;
  cfg.command = "simulate";
  ExperimentOptions opt;
  opt.out = scratch("zero");
  EXPECT_EQ(run_experiment(cfg, opt), 0);
  EXPECT_FALSE(fs::exists(opt.out / "_incomplete"));
  const CsvTable counts = read_csv(opt.out / "counts.csv");
  EXPECT_TRUE(counts.rows.empty());
  EXPECT_EQ(counts.header.config_hash, config_hash(cfg));
  const EventLog ev = parse_events(read_text_file(opt.out / "events.jsonl"), 3);
  EXPECT_TRUE(ev.events.empty());
  fs::remove_all(opt.out);
}

TEST(Experiment, SameSeedGivesIdenticalEvents) {
  RunConfig cfg = parse(kSmall);
  cfg.command = "simulate";
  ExperimentOptions a, b;
  a.out = scratch("seed_a");
  b.out = scratch("seed_b");
  b.workers = 2;
  ASSERT_EQ(run_experiment(cfg, a), 0);
  ASSERT_EQ(run_experiment(cfg, b), 0);
  const std::string ea = read_text_file(a.out / "events.jsonl");
  EXPECT_GT(ea.size(), 200u);
  EXPECT_EQ(ea, read_text_file(b.out / "events.jsonl"));
  EXPECT_EQ(read_text_file(a.out / "counts.csv"), read_text_file(b.out / "counts.csv"));
  ExperimentOptions c;
  c.out = scratch("seed_c");
  c.seed = 6;
  ASSERT_EQ(run_experiment(cfg, c), 0);
  EXPECT_NE(ea, read_text_file(c.out / "events.jsonl"));
  for (const auto& p : {a.out, b.out, c.out}) fs::remove_all(p);
}

TEST(Experiment, ValidateRefusesForeignArtifacts) {
  RunConfig cfg = parse(kSmall);
  cfg.command = "full";
  ExperimentOptions opt;
  opt.out = scratch("foreign");
  run_experiment(cfg, opt);
  RunConfig other = cfg;
  other.alpha.value = 3.0;
  EXPECT_THROW(validate_artifacts(other, opt.out), ValidationError);
  fs::remove_all(opt.out);
}

TEST(Experiment, FailedStageLeavesIncompleteMarker) {
  RunConfig cfg = parse(kSmall);
  cfg.command = "validate";
  ExperimentOptions opt;
  opt.out = scratch("marker");
  EXPECT_ANY_THROW(run_experiment(cfg, opt));
  EXPECT_TRUE(fs::exists(opt.out / "_incomplete"));
  fs::remove_all(opt.out);
}

TEST(Experiment, ShippedExampleAllPass) {
  RunConfig cfg = parse_config(COAGLAB_SOURCE_DIR "/configs/example.yaml", no_env());
  ExperimentOptions opt;
  opt.out = scratch("example");
  ASSERT_EQ(run_experiment(cfg, opt), 0);
  const std::string report = read_text_file(opt.out / "report.json");
  EXPECT_EQ(report.find("\"FAIL\""), std::string::npos) << report;
  EXPECT_NE(report.find("\"PASS\""), std::string::npos);
  for (const char* f : {"beta_table.csv", "f_curve.csv", "counts.csv", "events.jsonl",
                        "macro_counts.csv", "config.json"}) {
    EXPECT_TRUE(fs::exists(opt.out / f)) << f;
    if (std::string(f).ends_with(".csv")) {
      EXPECT_EQ(read_csv(opt.out / f).header.config_hash, config_hash(cfg)) << f;
    }
  }
  fs::remove_all(opt.out);
}
