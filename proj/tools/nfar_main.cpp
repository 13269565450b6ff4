// nfar: simulation and learning toolkit for nonlinear functional
// autoregressive models on 2-D grids.
//
// Subcommands:
//   simulate         generate a path and write it as CSV frames + meta.json
//   check-embedding  circulant spectrum diagnostics as JSON
//   check-conditions mixing/drift condition report as JSON
//   train            fit the network kernel on a simulated path
//   sweep            replications x sample-size study from a TOML config
//   evaluate         compare a trained kernel against the true operator
//                    on a fresh test field

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nfar/experiment.hpp"
#include "nfar/mixing.hpp"

namespace {

int default_workers() {
  if (const char* env = std::getenv("NFAR_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

nfar::TrainConfig train_section_or_default(const std::string& config_path) {
  if (config_path.empty()) {
    return nfar::TrainConfig{};
  }
  return nfar::load_experiment_config(config_path).train;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"NFAR simulation and operator-learning toolkit"};
  app.require_subcommand(1);

  // --- simulate ---
  auto* simulate = app.add_subcommand(
      "simulate", "Simulate a path and write CSV frames plus meta.json");
  std::uint64_t sim_seed = 1;
  int sim_grid_size = 100;
  int sim_length = 100;
  int sim_burn_in = 500;
  std::string sim_out;
  simulate->add_option("--seed", sim_seed, "Noise stream seed");
  simulate->add_option("--grid-size", sim_grid_size, "Grid points per axis");
  simulate->add_option("--length", sim_length, "Retained path length");
  simulate->add_option("--burn-in", sim_burn_in, "Discarded initial steps");
  simulate->add_option("--out", sim_out, "Output directory")->required();

  // --- check-embedding ---
  auto* embedding = app.add_subcommand(
      "check-embedding", "Print circulant spectrum diagnostics as JSON");
  int emb_grid_size = 100;
  double emb_scale = 5.0;
  embedding->add_option("--grid-size", emb_grid_size, "Grid points per axis");
  embedding->add_option("--scale", emb_scale, "Kernel scale");

  // --- check-conditions ---
  auto* conditions = app.add_subcommand(
      "check-conditions", "Numerical mixing-condition report as JSON");
  int cond_grid_size = 16;
  int cond_length = 2000;
  int cond_burn_in = 500;
  int cond_max_lag = 20;
  int cond_terms = 50;
  std::uint64_t cond_seed = 1;
  conditions->add_option("--grid-size", cond_grid_size,
                         "Grid points per axis (<= 40)");
  conditions->add_option("--length", cond_length, "Diagnostic path length");
  conditions->add_option("--burn-in", cond_burn_in, "Discarded initial steps");
  conditions->add_option("--max-lag", cond_max_lag, "Autocorrelation lags");
  conditions->add_option("--terms", cond_terms, "Expansion partial sums");
  conditions->add_option("--seed", cond_seed, "Noise stream seed");

  // --- train ---
  auto* train_cmd = app.add_subcommand(
      "train", "Train the network kernel on a simulated path directory");
  std::string train_data, train_config, train_out, train_trace;
  train_cmd->add_option("--data", train_data, "Path directory from simulate")
      ->required();
  train_cmd->add_option("--config", train_config,
                        "TOML config ([train] section)");
  train_cmd->add_option("--out", train_out, "Checkpoint JSON path")
      ->required();
  train_cmd->add_option("--trace", train_trace, "Per-epoch trace CSV path");

  // --- sweep ---
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Run the replication x sample-size study");
  std::string sweep_config, sweep_out;
  int sweep_workers = 0;
  sweep_cmd->add_option("--config", sweep_config, "TOML config")->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();
  sweep_cmd->add_option("--workers", sweep_workers,
                        "Parallel cell workers (default: NFAR_WORKERS or "
                        "hardware threads)");

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand(
      "evaluate",
      "Generalization gap of a checkpoint on a fresh test field");
  std::string eval_checkpoint, eval_config;
  std::uint64_t eval_test_seed = 1;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint JSON")
      ->required();
  eval_cmd->add_option("--test-seed", eval_test_seed, "Test field seed")
      ->required();
  eval_cmd->add_option("--config", eval_config,
                       "TOML config for model/grid settings");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      nfar::ExperimentConfig cfg;
      nfar::NfarModel model = cfg.sim_model();
      model.grid = nfar::GridSpec{sim_grid_size};
      auto spectrum = std::make_shared<const nfar::CirculantSpectrum>(
          nfar::build_spectrum(model.kernel, model.grid));
      nfar::NoiseSampler sampler(spectrum, sim_seed);
      const nfar::NfarPath path =
          nfar::simulate_path(model, sampler, sim_length, sim_burn_in);
      nfar::write_path(path, sim_out);
      std::cout << "wrote " << path.length() << " frames to " << sim_out
                << "\n";
    } else if (*embedding) {
      const auto spec = nfar::build_spectrum(
          nfar::StationaryKernel{emb_scale}, nfar::GridSpec{emb_grid_size});
      const double min_clamped =
          *std::min_element(spec.lambda.begin(), spec.lambda.end());
      nlohmann::json j{{"grid_size", emb_grid_size},
                       {"scale", emb_scale},
                       {"min_lambda", min_clamped},
                       {"min_lambda_raw", spec.min_lambda_raw},
                       {"max_lambda", spec.max_lambda},
                       {"clamp_count", spec.clamp_count},
                       {"clamped_mass", spec.clamped_mass}};
      std::cout << j.dump(2) << "\n";
    } else if (*conditions) {
      nfar::ExperimentConfig cfg;
      nfar::NfarModel model = cfg.sim_model();
      model.grid = nfar::GridSpec{cond_grid_size};
      const auto q =
          nfar::discretize_covariance(model.kernel, model.grid);
      const auto drift = nfar::check_assumption_m2(model, q);
      const auto example = nfar::check_example_condition(
          model, q, std::min(cond_terms, q.grid.point_count()));

      auto spectrum = std::make_shared<const nfar::CirculantSpectrum>(
          nfar::build_spectrum(model.kernel, model.grid));
      nfar::NoiseSampler sampler(spectrum, cond_seed);
      const auto path =
          nfar::simulate_path(model, sampler, cond_length, cond_burn_in);
      const auto drift_test = nfar::empirical_drift_test(path, drift);
      const auto decay = nfar::mixing_decay_estimate(path, cond_max_lag);

      nlohmann::json j{
          {"grid_size", cond_grid_size},
          {"trace", q.trace},
          {"lambda_max", q.lambda_max()},
          {"rho", drift.rho},
          {"kappa", drift.kappa},
          {"tau_sup", drift.tau_sup},
          {"drift_condition_passes", drift.condition_passes},
          {"partial_sums", example.partial_sums},
          {"partial_sums_diverge", example.diverges},
          {"tau_sup_sq_bound", example.tau_sup_sq},
          {"drift_pass", drift_test.pass},
          {"drift_mean_gap", drift_test.mean_gap},
          {"drift_margin", drift_test.margin},
          {"decay_rate",
           decay.status == nfar::MixingDecayResult::Status::Fitted
               ? nlohmann::json(decay.rate)
               : nlohmann::json()},
          {"r2", decay.status == nfar::MixingDecayResult::Status::Fitted
                     ? nlohmann::json(decay.r2)
                     : nlohmann::json()},
          {"decay_status",
           decay.status == nfar::MixingDecayResult::Status::Fitted
               ? "fitted"
               : (decay.status ==
                          nfar::MixingDecayResult::Status::TooFastToFit
                      ? "decay too fast to fit"
                      : "degenerate")},
          {"note", "numerical evidence at grid resolution " +
                       std::to_string(cond_grid_size) + ", not a proof"},
      };
      std::cout << j.dump(2) << "\n";
    } else if (*train_cmd) {
      const nfar::NfarPath path = nfar::read_path(train_data);
      const nfar::TrainConfig tc = train_section_or_default(train_config);
      auto [model, trace] = nfar::train(path, tc);
      nfar::Checkpoint ck;
      ck.params = model.net;
      ck.seed = tc.seed;
      ck.epoch = trace.stop_epoch;
      nfar::save_checkpoint(train_out, ck);
      if (!train_trace.empty()) {
        nfar::write_trace_csv(trace, train_trace);
      }
      std::cout << "stopped after " << trace.stop_epoch
                << " epochs; final validation loss "
                << trace.rows.back().val_loss << "\n";
    } else if (*sweep_cmd) {
      const auto cfg = nfar::load_experiment_config(sweep_config);
      const int workers =
          sweep_workers >= 1 ? sweep_workers : default_workers();
      const auto result = nfar::run_sweep(cfg, sweep_out, workers);
      const auto rows = result.summary();
      for (const auto& r : rows) {
        std::cout << "T=" << r.t_len << "  G=" << r.mean_g
                  << "  stderr=" << r.stderr_g << "  n=" << r.n << "\n";
      }
      if (!result.complete()) {
        std::cerr << "warning: sweep has failed cells (see failures.json)\n";
        return 2;
      }
    } else if (*eval_cmd) {
      nfar::ExperimentConfig cfg;
      if (!eval_config.empty()) {
        cfg = nfar::load_experiment_config(eval_config);
      }
      const auto ck = nfar::load_checkpoint(eval_checkpoint);

      const nfar::NfarModel sim = cfg.sim_model();
      auto spectrum = std::make_shared<const nfar::CirculantSpectrum>(
          nfar::build_spectrum(sim.kernel, sim.grid));
      nfar::NoiseSampler sampler(spectrum, eval_test_seed);
      const auto test_path = nfar::simulate_path(sim, sampler, 1, cfg.burn_in);
      const nfar::GridField test_field =
          nfar::downsample(test_path.fields.front(),
                           nfar::GridSpec{cfg.learn_grid});

      const nfar::GridField truth =
          nfar::apply_true_operator(cfg.learn_model(), test_field);
      nfar::OperatorModel op;
      op.net = ck.params;
      op.grid = nfar::GridSpec{cfg.learn_grid};
      op.integration = nfar::Integration::FullSum;
      const nfar::GridField predicted = nfar::apply_operator(op, test_field);

      nlohmann::json j{{"g", nfar::generalization_gap(predicted, truth)},
                       {"test_seed", eval_test_seed},
                       {"learn_grid", cfg.learn_grid},
                       {"checkpoint_epoch", ck.epoch}};
      std::cout << j.dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
