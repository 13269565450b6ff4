#include "nfar/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "nfar/errors.hpp"

namespace nfar {

Integration integration_from_string(const std::string& name) {
  if (name == "fullsum") return Integration::FullSum;
  if (name == "mc" || name == "montecarlo") return Integration::MonteCarlo;
  throw ConfigError("unknown integration mode '" + name + "'");
}

std::string to_string(Integration integration) {
  return integration == Integration::FullSum ? "fullsum" : "mc";
}

namespace {

// Rows processed per forward chunk; bounds activation memory while
// keeping the GEMMs long.
constexpr int kChunkRows = 16384;

// Inner-point block [v1 v2 x] for one input field: either every grid
// point or a drawn subset.
Eigen::MatrixXd point_block(const GridField& z,
                            const std::vector<int>* subset) {
  const int s = z.size();
  const auto vals = z.values();
  const int count = subset ? static_cast<int>(subset->size()) : s * s;
  Eigen::MatrixXd pts(count, 3);
  for (int r = 0; r < count; ++r) {
    const int flat = subset ? (*subset)[static_cast<std::size_t>(r)] : r;
    pts(r, 0) = static_cast<double>(flat / s) / s;
    pts(r, 1) = static_cast<double>(flat % s) / s;
    pts(r, 2) = vals[static_cast<std::size_t>(flat)];
  }
  return pts;
}

std::vector<int> draw_points(rng::Stream& stream, int grid_points,
                             int count) {
  std::vector<int> flat(static_cast<std::size_t>(count));
  for (auto& idx : flat) {
    idx = static_cast<int>(stream.index(static_cast<std::size_t>(grid_points)));
  }
  return flat;
}

// Predictions for every output site of the grid given one inner-point
// block: pred(site) = mean_p net(u1, u2, v1, v2, x_p). Sites are chunked
// in a fixed order, so the evaluation is deterministic.
void predict_sites(MlpWorkspace& ws, const MlpParams& net, GridSpec grid,
                   const Eigen::MatrixXd& pts, Eigen::VectorXd& out) {
  const int s = grid.size;
  const int sites = s * s;
  const int p = static_cast<int>(pts.rows());
  const int sites_per_chunk = std::max(1, kChunkRows / p);
  out.resize(sites);

  Eigen::MatrixXd x;
  for (int begin = 0; begin < sites; begin += sites_per_chunk) {
    const int chunk = std::min(sites_per_chunk, sites - begin);
    x.resize(static_cast<Eigen::Index>(chunk) * p, 5);
    for (int k = 0; k < chunk; ++k) {
      const int site = begin + k;
      const double u1 = static_cast<double>(site / s) / s;
      const double u2 = static_cast<double>(site % s) / s;
      auto rows = x.middleRows(static_cast<Eigen::Index>(k) * p, p);
      rows.col(0).setConstant(u1);
      rows.col(1).setConstant(u2);
      rows.col(2) = pts.col(0);
      rows.col(3) = pts.col(1);
      rows.col(4) = pts.col(2);
    }
    const Eigen::VectorXd& y = ws.forward(net, x);
    const Eigen::Map<const Eigen::MatrixXd> grouped(y.data(), p, chunk);
    out.segment(begin, chunk) = grouped.colwise().mean();
  }
}

} // namespace

GridField apply_operator(OperatorModel& m, const GridField& z) {
  if (z.spec() != m.grid) {
    throw ShapeError("field grid does not match operator grid");
  }
  if (m.trunc_level && sup_norm(z) > *m.trunc_level) {
    return GridField(m.grid);
  }

  Eigen::MatrixXd pts;
  if (m.integration == Integration::MonteCarlo) {
    if (m.s_mc < 1) {
      throw ConfigError("Monte Carlo point count must be >= 1");
    }
    rng::Stream stream(rng::derive(m.mc_stream_id, {m.mc_draws++}));
    const auto subset = draw_points(stream, m.grid.point_count(), m.s_mc);
    pts = point_block(z, &subset);
  } else {
    pts = point_block(z, nullptr);
  }

  MlpWorkspace ws;
  Eigen::VectorXd pred;
  predict_sites(ws, m.net, m.grid, pts, pred);

  GridField out(m.grid);
  std::copy(pred.data(), pred.data() + pred.size(), out.values().begin());
  return out;
}

namespace {

// Shared by empirical_risk and the validation loop: risk over a pair
// range with an optional fixed Monte Carlo subset (nullptr = full sum).
double risk_over_pairs(MlpWorkspace& ws, const MlpParams& net,
                       const NfarPath& path, PairRange range,
                       const std::vector<int>* subset) {
  const GridSpec grid = path.grid();
  const int sites = grid.point_count();
  Eigen::VectorXd pred;
  double acc = 0.0;
  for (int t = range.begin; t < range.end; ++t) {
    const auto& z = path.fields[static_cast<std::size_t>(t)];
    const auto& target = path.fields[static_cast<std::size_t>(t + 1)];
    const Eigen::MatrixXd pts = point_block(z, subset);
    predict_sites(ws, net, grid, pts, pred);
    const auto tv = target.values();
    for (int site = 0; site < sites; ++site) {
      const double r = pred(site) - tv[static_cast<std::size_t>(site)];
      acc += r * r;
    }
  }
  return acc / (static_cast<double>(sites) * range.count());
}

void check_range(const NfarPath& path, PairRange range) {
  if (range.count() < 1) {
    throw ConfigError("empty pair range");
  }
  if (range.begin < 0 || range.end > path.length() - 1) {
    throw ConfigError("pair range outside the path");
  }
}

} // namespace

double empirical_risk(OperatorModel& m, const NfarPath& path,
                      PairRange range) {
  if (path.length() < 2) {
    throw ConfigError("empirical risk needs a path of length >= 2");
  }
  check_range(path, range);
  if (path.grid() != m.grid) {
    throw ShapeError("path grid does not match operator grid");
  }
  MlpWorkspace ws;
  if (m.integration == Integration::MonteCarlo) {
    rng::Stream stream(rng::derive(m.mc_stream_id, {m.mc_draws++}));
    const auto subset = draw_points(stream, m.grid.point_count(), m.s_mc);
    return risk_over_pairs(ws, m.net, path, range, &subset);
  }
  return risk_over_pairs(ws, m.net, path, range, nullptr);
}

std::pair<OperatorModel, TrainTrace> train(const NfarPath& path,
                                           const TrainConfig& cfg) {
  const int t_total = path.length();
  if (t_total < 5) {
    throw ConfigError("training needs a path of length >= 5");
  }
  if (cfg.patience > cfg.epochs_max) {
    throw ConfigError("patience must not exceed epochs_max");
  }
  if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  if (cfg.batch_size < 1 || cfg.epochs_max < 1 || cfg.patience < 0) {
    throw ConfigError("bad training configuration");
  }

  const int t_train =
      static_cast<int>(std::floor(cfg.train_fraction * t_total));
  const int train_pairs = t_train - 1;       // pairs (t, t+1), t = 0..t_train-2
  const int val_begin = t_train;             // pairs t = t_train..t_total-2
  const int val_pairs = t_total - t_train - 1;
  if (train_pairs < 1) {
    throw ConfigError("no training pairs after the split");
  }
  if (val_pairs < 1) {
    throw ConfigError(
        "no validation pairs after the split; the boundary pair is excluded "
        "by construction, so the path must have length >= 6");
  }

  const GridSpec grid = path.grid();
  const int s = grid.size;
  const int sites = s * s;
  const bool mc = cfg.integration == Integration::MonteCarlo;
  if (mc && cfg.s_mc < 1) {
    throw ConfigError("Monte Carlo point count must be >= 1");
  }
  const int inner = mc ? cfg.s_mc : sites;

  MlpArchitecture arch{5, cfg.hidden, 1};
  rng::Stream init_stream(rng::derive(cfg.seed, 0, rng::Role::NetInit));
  MlpParams net = glorot_init(arch, init_stream);
  AdamState adam = make_adam_state(arch, cfg.lr);
  MlpGradients grads = zero_gradients(arch);

  rng::Stream shuffle_stream(rng::derive(cfg.seed, 0, rng::Role::Shuffle));
  rng::Stream mc_train_stream(rng::derive(cfg.seed, 0, rng::Role::McTrain));

  // Fixed run-level validation point set, drawn once so that per-epoch
  // validation losses are comparable.
  std::vector<int> val_subset;
  if (mc) {
    rng::Stream mc_val_stream(rng::derive(cfg.seed, 0, rng::Role::McVal));
    val_subset = draw_points(mc_val_stream, sites, cfg.s_mc);
  }

  // Training triples (t, i, j) as flat ids t * sites + site.
  std::vector<std::uint32_t> triples(
      static_cast<std::size_t>(train_pairs) * sites);
  for (std::size_t id = 0; id < triples.size(); ++id) {
    triples[id] = static_cast<std::uint32_t>(id);
  }

  TrainTrace trace;
  trace.train_pairs = train_pairs;
  trace.val_pairs = val_pairs;

  MlpWorkspace ws;
  Eigen::MatrixXd x;
  Eigen::VectorXd targets, dout;

  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;
  MlpParams best_net = net;
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();

    // Fisher-Yates shuffle of the triple order.
    for (std::size_t i = triples.size() - 1; i > 0; --i) {
      const std::size_t j = shuffle_stream.index(i + 1);
      std::swap(triples[i], triples[j]);
    }

    double loss_sum = 0.0;
    std::size_t consumed = 0;
    int batch_index = 0;
    while (consumed < triples.size()) {
      const int k = static_cast<int>(std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size),
          triples.size() - consumed));

      std::vector<int> subset;
      const std::vector<int>* subset_ptr = nullptr;
      if (mc) {
        subset = draw_points(mc_train_stream, sites, cfg.s_mc);
        subset_ptr = &subset;
      }

      x.resize(static_cast<Eigen::Index>(k) * inner, 5);
      targets.resize(k);
      int prev_t = -1;
      Eigen::MatrixXd pts;
      for (int b = 0; b < k; ++b) {
        const std::uint32_t id = triples[consumed + static_cast<std::size_t>(b)];
        const int t = static_cast<int>(id) / sites;
        const int site = static_cast<int>(id) % sites;
        if (t != prev_t) {
          pts = point_block(path.fields[static_cast<std::size_t>(t)],
                            subset_ptr);
          prev_t = t;
        }
        auto rows = x.middleRows(static_cast<Eigen::Index>(b) * inner, inner);
        rows.col(0).setConstant(static_cast<double>(site / s) / s);
        rows.col(1).setConstant(static_cast<double>(site % s) / s);
        rows.col(2) = pts.col(0);
        rows.col(3) = pts.col(1);
        rows.col(4) = pts.col(2);
        targets(b) =
            path.fields[static_cast<std::size_t>(t + 1)].values()
                [static_cast<std::size_t>(site)];
      }

      const Eigen::VectorXd& y = ws.forward(net, x);
      const Eigen::Map<const Eigen::MatrixXd> grouped(y.data(), inner, k);
      const Eigen::VectorXd residual =
          grouped.colwise().mean().transpose() - targets;
      const double batch_loss = residual.squaredNorm() / k;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      loss_sum += batch_loss * k;

      dout.resize(static_cast<Eigen::Index>(k) * inner);
      Eigen::Map<Eigen::MatrixXd>(dout.data(), inner, k).rowwise() =
          (2.0 / (static_cast<double>(k) * inner) * residual).transpose();

      grads.set_zero();
      ws.backward(net, dout, grads);
      adam_step(adam, net, grads);

      consumed += static_cast<std::size_t>(k);
      ++batch_index;
    }

    const double train_loss = loss_sum / static_cast<double>(triples.size());
    const double val_loss =
        risk_over_pairs(ws, net, path,
                        PairRange{val_begin, val_begin + val_pairs},
                        mc ? &val_subset : nullptr);
    if (!std::isfinite(val_loss)) {
      throw NumericError("non-finite validation loss at epoch " +
                         std::to_string(epoch));
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - e0)
            .count();
    trace.rows.push_back(EpochRow{epoch, train_loss, val_loss, secs});
    trace.stop_epoch = epoch;

    // Strict improvement resets the stall counter; ties count as no
    // improvement.
    if (val_loss < best_val) {
      best_val = val_loss;
      stall = 0;
      if (cfg.restore_best) {
        best_net = net;
      }
    } else {
      ++stall;
    }
    if (stall >= cfg.patience) {
      break;
    }
  }

  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  OperatorModel model;
  model.net = cfg.restore_best ? std::move(best_net) : std::move(net);
  model.grid = grid;
  model.integration = cfg.integration;
  model.s_mc = cfg.s_mc;
  model.mc_stream_id = rng::derive(cfg.seed, 0, rng::Role::McApply);
  return {std::move(model), std::move(trace)};
}

void write_trace_csv(const TrainTrace& trace,
                     const std::filesystem::path& path) {
  std::string body = "epoch,train_loss,val_loss,seconds\n";
  for (const auto& row : trace.rows) {
    body += std::to_string(row.epoch);
    body += ',';
    body += io::format_double(row.train_loss);
    body += ',';
    body += io::format_double(row.val_loss);
    body += ',';
    body += io::format_double(row.seconds);
    body += '\n';
  }
  io::atomic_write(path, body);
}

} // namespace nfar
