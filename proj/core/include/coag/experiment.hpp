#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "coag/config.hpp"
#include "coag/io.hpp"
#include "coag/validation.hpp"

namespace coag {

struct ExperimentOptions {
  std::filesystem::path out;           ///< empty: cfg.out
  int workers = 0;                     ///< 0: cfg.workers
  std::optional<std::uint64_t> seed;   ///< overrides params.seed
  std::ostream* log = nullptr;
};

struct ReplicaResult {
  int index = 0;
  std::uint64_t seed = 0;
  TrajectoryStats stats;
  std::vector<StosszahlSample> samples;
  std::map<std::int64_t, double> functional;  ///< mass -> ε^{d-2} Σ J(x_i) at T
  std::optional<Configuration> final_state;
};

struct ReplicaOptions {
  bool keep_final = false;
  bool stosszahl = true;   ///< sample mollified densities when configured
};

/// Runs replica k with seed replica_seed(params.seed, k).
ReplicaResult run_replica(const RunConfig& cfg, int k, const ReplicaOptions& options = {});

/// Runs replicas [0, count) on up to `workers` threads; results are in index order.
std::vector<ReplicaResult> run_replicas(const RunConfig& cfg, int count, int workers,
                                        const ReplicaOptions& options = {});

/// Initial macro state from the configured densities: uniform average in
/// homogeneous mode (torus only), cell-centre values in spatial mode.
MacroField initial_macro_field(const RunConfig& cfg);

/// β matrix up to pde.m_max (or `m_max` when positive).
BetaMatrix beta_for(const RunConfig& cfg, int m_max = 0, std::vector<BetaResult>* rows = nullptr);

struct Check {
  std::string name;
  enum class Status { pass, fail, skipped } status = Status::skipped;
  std::map<std::string, double> values;
  std::string note;
};

std::string to_string(Check::Status s);

struct ValidationReport {
  ArtifactHeader header;
  std::vector<Check> checks;
  bool any_fail() const;
};

/// Reads the artifacts in `dir` and evaluates every configured check. Throws
/// ValidationError if an artifact was produced from a different model.
ValidationReport validate_artifacts(const RunConfig& cfg, const std::filesystem::path& dir);

std::string report_json(const ValidationReport& report);

/// Executes cfg.command; returns 0 on success, 1 if validation failed.
int run_experiment(RunConfig cfg, const ExperimentOptions& options = {});

}  // namespace coag
