#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coag/macro_pde.hpp"
#include "coag/micro_sim.hpp"
#include "coag/model.hpp"
#include "coag/validation.hpp"

namespace coag {

/// Parse or validation failure. `what()` reads "<source>:<line>:<col>: <field>: <message>".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, int column, const std::string& field,
              const std::string& message);
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  int column_;
  std::string field_;
};

struct ParamsConfig {
  int dim = 3;
  double big_z = 100.0;
  std::int64_t n_particles = 2000;
  double epsilon = 0.0;  ///< derived from Z and N
  double tau_factor = kDefaultTauFactor;
  double horizon = 0.5;
  std::uint64_t seed = 1;
  double torus_side = 0.0;  ///< 0 = free space
};

struct AlphaConfig {
  std::string kind = "constant";  ///< constant | product | table
  double value = 1.0;
  std::vector<std::vector<double>> table;
};

struct DiffusionConfig {
  std::string kind = "constant";  ///< constant | power | exponential | table
  double value = 0.5;
  double exponent = 0.0;
  double base = 1.0;
  std::vector<double> table;
};

struct InitialConfig {
  std::int64_t mass = 1;
  std::string shape = "uniform";  ///< uniform | gaussian
  double intensity = 0.0;
  std::vector<double> lo;         ///< uniform (default: the torus)
  std::vector<double> hi;
  std::vector<double> center;     ///< gaussian
  double sigma = 1.0;
};

struct CellConfig {
  std::string grid = "auto";  ///< auto | radial | cartesian
  int shells = kDefaultShells;
  int cells_per_axis = 0;
  double tol = kDefaultCellTol;
  int table_size = 10;        ///< β table is table_size × table_size
  std::vector<double> capacity_alphas{1.0, 10.0, 100.0, 1000.0, 10000.0};
};

struct SimConfig {
  int replicas = 4;
  int m_max = kDefaultMassCap;
  std::int64_t count_every = 10;
  bool record_events = true;
  double cells_per_particle = 8.0;
  std::int64_t q_m1 = 1;
  std::int64_t q_m2 = 1;
  std::int64_t q_sample_every = 10;
  int density_nodes = 0;           ///< 0 = about 3 nodes per δ
  int density_samples = 11;        ///< mollified-density snapshots over [0, T]
  double delta = 0.0;              ///< 0 = (ε L)^{1/2}
  std::int64_t max_overflow = -1;
};

struct PdeConfig {
  std::string mode = "homogeneous";  ///< homogeneous | spatial
  int m_max = kDefaultMassCap;
  double dt = 1e-3;
  std::string convention = "pair";   ///< pair | printed
  int nodes = 16;
  std::string boundary = "torus";    ///< torus | zero_flux
  std::vector<double> observe_times;
};

struct ValidateConfig {
  std::string functional = "constant";  ///< constant | gaussian | box | cosine
  double amplitude = 1.0;
  double offset = 1.0;
  double width = 1.0;
  double edge = 0.1;
  int axis = 0;
  std::vector<double> center;
  std::vector<int> masses{1};
  double count_tolerance = 0.2;
  double stosszahl_tolerance = 0.3;
  double conservation_tolerance = 1e-6;
  bool rate_fit = false;
  double fit_window = 0.1;
  int bootstrap = 1000;
  double rate_tolerance = 0.25;
};

struct RunConfig {
  ParamsConfig params;
  KernelSpec kernel;
  AlphaConfig alpha;
  DiffusionConfig diffusion;
  std::vector<InitialConfig> initial;
  CellConfig cell;
  SimConfig sim;
  PdeConfig pde;
  ValidateConfig validate;
  std::string command = "full";
  std::string out = "out";
  int workers = 1;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

struct ParseOptions {
  bool env_overrides = true;          ///< apply COAGLAB_<SECTION>_<KEY> variables
  std::map<std::string, std::string> overrides;  ///< "section.key" -> YAML scalar
};

/// Parses a YAML (or JSON) document; validates and materialises defaults.
RunConfig parse_config_text(const std::string& text, const std::string& source = "<string>",
                            const ParseOptions& options = {});
RunConfig parse_config(const std::string& path, const ParseOptions& options = {});

/// Canonical JSON: sorted keys, shortest round-trip doubles, two-space
/// indentation, trailing LF.
std::string serialize(const RunConfig& cfg);

/// FNV-1a 64 of the canonical serialisation.
std::uint64_t config_hash(const RunConfig& cfg);
/// Hash restricted to the model and initial data (params, kernel, alpha,
/// diffusion, initial); micro and macro artifacts must agree on it.
std::uint64_t model_hash(const RunConfig& cfg);
std::string hash_hex(std::uint64_t h);

// Builders from a validated config.
SimParams sim_params(const RunConfig& cfg);
Domain domain(const RunConfig& cfg);
KernelV kernel(const RunConfig& cfg);
RatePolicy alpha_policy(const RunConfig& cfg);
DiffusionPolicy diffusion_policy(const RunConfig& cfg);
InitialDensities initial_densities(const RunConfig& cfg);
MicroModel micro_model(const RunConfig& cfg);
std::shared_ptr<const CellGrid> cell_grid(const RunConfig& cfg, const KernelV& v);
TestFunctional test_functional(const RunConfig& cfg);
ReactionConvention convention(const RunConfig& cfg);

}  // namespace coag
