#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nfar/grid.hpp"
#include "nfar/mlp.hpp"
#include "nfar/model.hpp"
#include "nfar/rng.hpp"

namespace nfar {

/// Inner-integral scheme of the operator model: exact quadrature over all
/// S^2 grid points, or Monte Carlo over points drawn uniformly with
/// replacement from the grid.
enum class Integration { FullSum, MonteCarlo };

Integration integration_from_string(const std::string& name);
std::string to_string(Integration integration);

/// Network-kernel operator on a grid:
/// out(u) = mean over inner points v of net(u1, u2, v1, v2, z(v)).
/// MonteCarlo mode draws one fresh shared point set per application from
/// the model's stream; FullSum never touches the stream.
struct OperatorModel {
  MlpParams net;
  GridSpec grid;
  Integration integration = Integration::FullSum;
  int s_mc = 500;
  std::uint64_t mc_stream_id = 0;
  std::uint64_t mc_draws = 0;
  std::optional<double> trunc_level; // sup-norm truncation, default off
};

GridField apply_operator(OperatorModel& m, const GridField& z);

/// Half-open range of transition-pair start indices (0-based: pair t is
/// (fields[t], fields[t+1])).
struct PairRange {
  int begin = 0;
  int end = 0;

  int count() const { return end - begin; }
};

/// Mean squared residual over pairs and grid sites with quadrature
/// weights:
/// (1 / (S^2 * pairs)) * sum_t sum_ij (z_{t+1}(ij) - op(z_t)(ij))^2.
double empirical_risk(OperatorModel& m, const NfarPath& path,
                      PairRange range);

struct TrainConfig {
  int epochs_max = 200;
  int patience = 20;
  int batch_size = 128;
  double lr = 1e-3;
  double train_fraction = 0.8;
  int s_mc = 500;
  std::uint64_t seed = 0;
  Integration integration = Integration::MonteCarlo;
  std::vector<int> hidden = {32, 32, 32, 32, 32};
  bool restore_best = false; // return best-validation instead of final
};

struct EpochRow {
  int epoch = 0; // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRow> rows;
  int stop_epoch = 0;
  double wall_seconds = 0.0;
  int train_pairs = 0;
  int val_pairs = 0;
};

/// Trains a network kernel on the path: split at floor(train_fraction*T),
/// per-epoch shuffle of all (t, i, j) training triples, minibatch Adam
/// with a fresh Monte Carlo point set per minibatch, validation on a
/// fixed run-level point set after each epoch, early stopping when the
/// validation loss fails to strictly improve for `patience` consecutive
/// epochs. Returns the final-epoch weights (not best-so-far) unless
/// restore_best is set.
std::pair<OperatorModel, TrainTrace> train(const NfarPath& path,
                                           const TrainConfig& cfg);

/// Trace CSV with columns epoch,train_loss,val_loss,seconds.
void write_trace_csv(const TrainTrace& trace,
                     const std::filesystem::path& path);

} // namespace nfar
