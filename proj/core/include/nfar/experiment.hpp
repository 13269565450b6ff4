#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nfar/gp.hpp"
#include "nfar/learner.hpp"
#include "nfar/model.hpp"

namespace nfar {

/// Full study configuration: B replications x sample-size sweep. Defaults
/// reproduce the full-scale experiment; configs/desk.toml scales it down
/// for the acceptance run.
struct ExperimentConfig {
  // [model]
  double kernel_scale = 5.0;
  double amplitude = 5.0;
  Nonlinearity tau = Nonlinearity::CosSin;
  std::optional<double> trunc_level; // absent = untruncated

  // [sim]
  int sim_grid = 100;
  int learn_grid = 25;
  int burn_in = 500;

  // [train]
  TrainConfig train;

  // [sweep]
  std::vector<int> t_values = {250,  500,  750,  1000, 1250, 1500,
                               1750, 2000, 3000, 4000, 5000};
  int replications = 161;
  std::uint64_t master_seed = 1;

  NfarModel sim_model() const;
  NfarModel learn_model() const;
  void validate() const;
};

/// Strict TOML loader: sections [model], [sim], [train], [sweep]; any
/// unknown section or key is an error. Missing keys keep their defaults.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CellResult {
  int b = 0;
  int t_len = 0;
  bool ok = false;
  double g = 0.0;
  int stop_epoch = 0;
  double seconds = 0.0; // training wall time (volatile, not compared)
  std::string error;
};

struct ReplicationOutput {
  CellResult cell;
  TrainTrace trace;
  GridField test_field;    // downsampled independent test point
  GridField true_output;   // true operator applied to it
  GridField learned_output;
};

/// One (b, T) cell: simulate at sim_grid with seeds derived from
/// (master_seed, b, T, role), downsample to learn_grid, train, draw the
/// independent test point from a fresh burn-in path, and compare the
/// learned and true operators on it with full-sum integration.
/// A prebuilt spectrum for the simulation grid may be shared across
/// cells.
ReplicationOutput run_replication(
    const ExperimentConfig& cfg, int b, int t_len,
    std::shared_ptr<const CirculantSpectrum> spectrum = nullptr);

/// Squared quadrature distance between the learned and true operator
/// outputs; the per-replication generalization gap.
double generalization_gap(const GridField& learned, const GridField& truth);

struct SummaryRow {
  int t_len = 0;
  double mean_g = 0.0;
  double std_g = 0.0;
  double stderr_g = 0.0;
  int n = 0;
};

struct SweepResult {
  ExperimentConfig cfg;
  std::vector<CellResult> cells; // sorted by (t_len, b)
  std::vector<SummaryRow> summary() const;
  bool complete() const;
};

/// Runs every (b, T) cell over a worker pool. Completed cells are
/// persisted as one JSON each under out_dir/cells plus an append-only
/// index; an interrupted sweep resumes from those files and reproduces
/// identical numbers (all randomness is derived from (master_seed, b, T,
/// role), never from scheduling). Per-cell failures are recorded and the
/// sweep continues.
SweepResult run_sweep(const ExperimentConfig& cfg,
                      const std::filesystem::path& out_dir, int workers);

/// Writes results.csv (b,T,g,stop_epoch,seconds for completed cells),
/// summary.csv (T,G,std,stderr,n), loglog.svg (log10 T vs log10 G with
/// +-1 stderr bars), and the designated replication's surface pair
/// true.csv / predicted.csv.
void emit_artifacts(const SweepResult& result,
                    const std::filesystem::path& out_dir);

/// Least-squares slope of log10(G) against log10(T) over the summary
/// rows.
double loglog_slope(const std::vector<SummaryRow>& rows);

} // namespace nfar
