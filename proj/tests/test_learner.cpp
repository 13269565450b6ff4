#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "nfar/learner.hpp"

using namespace nfar;

namespace {

MlpParams constant_net(double c) {
  MlpArchitecture arch;
  arch.hidden = {4, 4};
  MlpParams p = zero_params(arch);
  p.biases.back()(0) = c;
  return p;
}

MlpParams seeded_net(std::uint64_t seed, std::vector<int> hidden = {8, 8}) {
  MlpArchitecture arch;
  arch.hidden = std::move(hidden);
  rng::Stream stream(seed);
  return glorot_init(arch, stream);
}

GridField random_field(GridSpec spec, std::uint64_t seed, double scale = 1.0) {
  rng::Stream stream(seed);
  GridField f(spec);
  for (auto& x : f.values()) {
    x = scale * stream.normal();
  }
  return f;
}

// Definition-level quadruple loop: one network evaluation per
// (output site, inner point).
GridField oracle_apply(const MlpParams& net, const GridField& z) {
  const int s = z.size();
  GridField out(z.spec());
  Eigen::MatrixXd row(1, 5);
  for (int i1 = 0; i1 < s; ++i1) {
    for (int j1 = 0; j1 < s; ++j1) {
      double acc = 0.0;
      for (int i2 = 0; i2 < s; ++i2) {
        for (int j2 = 0; j2 < s; ++j2) {
          row << double(i1) / s, double(j1) / s, double(i2) / s,
              double(j2) / s, z(i2, j2);
          acc += forward(net, row)(0);
        }
      }
      out(i1, j1) = acc / (double(s) * s);
    }
  }
  return out;
}

NfarPath synthetic_path(OperatorModel& op, const GridField& z0, int length) {
  NfarPath path;
  path.fields.push_back(z0);
  for (int t = 1; t < length; ++t) {
    path.fields.push_back(apply_operator(op, path.fields.back()));
  }
  return path;
}

} // namespace

TEST_CASE("constant kernel integrates to the constant") {
  const GridSpec grid{8};
  const GridField z = random_field(grid, 51);

  OperatorModel full{constant_net(0.75), grid, Integration::FullSum};
  const GridField a = apply_operator(full, z);
  OperatorModel mc{constant_net(0.75), grid, Integration::MonteCarlo, 100,
                   rng::derive(9, {1})};
  const GridField b = apply_operator(mc, z);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(a(i, j) == 0.75);
      CHECK(b(i, j) == 0.75);
    }
  }
}

TEST_CASE("full-sum application equals the quadruple loop") {
  const GridSpec grid{8};
  for (std::uint64_t seed = 60; seed < 65; ++seed) {
    OperatorModel op{seeded_net(seed), grid, Integration::FullSum};
    const GridField z = random_field(grid, seed + 100, 2.0);
    const GridField fast = apply_operator(op, z);
    const GridField slow = oracle_apply(op.net, z);
    double max_err = 0.0;
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        max_err = std::max(max_err, std::fabs(fast(i, j) - slow(i, j)));
      }
    }
    CHECK(max_err <= 1e-12);
  }
}

TEST_CASE("monte carlo application sits in its CLT band") {
  const GridSpec grid{8};
  const int s_mc = 200;
  OperatorModel full{seeded_net(70), grid, Integration::FullSum};
  OperatorModel mc{seeded_net(70), grid, Integration::MonteCarlo, s_mc,
                   rng::derive(71, {0})};
  const GridField z = random_field(grid, 72, 1.5);
  const GridField exact = apply_operator(full, z);
  const GridField approx = apply_operator(mc, z);

  // Per-site standard deviation of the integrand over the grid points.
  MlpWorkspace ws;
  int inside = 0, total = 0;
  Eigen::MatrixXd rows(64, 5);
  for (int i1 = 0; i1 < 8; ++i1) {
    for (int j1 = 0; j1 < 8; ++j1) {
      int r = 0;
      for (int i2 = 0; i2 < 8; ++i2) {
        for (int j2 = 0; j2 < 8; ++j2) {
          rows.row(r++) << i1 / 8.0, j1 / 8.0, i2 / 8.0, j2 / 8.0, z(i2, j2);
        }
      }
      const Eigen::VectorXd vals = ws.forward(mc.net, rows);
      const double mean = vals.mean();
      const double sd = std::sqrt((vals.array() - mean).square().mean());
      const double band = 4.0 * sd / std::sqrt(double(s_mc));
      inside += std::fabs(approx(i1, j1) - exact(i1, j1)) <= band ? 1 : 0;
      ++total;
    }
  }
  CHECK(inside >= static_cast<int>(0.97 * total));
}

TEST_CASE("full-sum ignores the Monte Carlo stream; MC is deterministic") {
  const GridSpec grid{6};
  const GridField z = random_field(grid, 80);
  OperatorModel a{seeded_net(81), grid, Integration::FullSum, 500, 1};
  OperatorModel b{seeded_net(81), grid, Integration::FullSum, 500, 999};
  const GridField fa = apply_operator(a, z);
  const GridField fb = apply_operator(b, z);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      CHECK(fa(i, j) == fb(i, j));
    }
  }

  OperatorModel m1{seeded_net(81), grid, Integration::MonteCarlo, 64, 7};
  OperatorModel m2{seeded_net(81), grid, Integration::MonteCarlo, 64, 7};
  const GridField g1 = apply_operator(m1, z);
  const GridField g2 = apply_operator(m2, z);
  const GridField g3 = apply_operator(m1, z); // second draw differs
  bool same_12 = true, same_13 = true;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      same_12 &= g1(i, j) == g2(i, j);
      same_13 &= g1(i, j) == g3(i, j);
    }
  }
  CHECK(same_12);
  CHECK_FALSE(same_13);
}

TEST_CASE("sup-norm truncation zeroes the operator") {
  const GridSpec grid{5};
  OperatorModel op{seeded_net(82), grid, Integration::FullSum};
  op.trunc_level = 1.0;
  const GridField z(grid, 2.0);
  const GridField out = apply_operator(op, z);
  for (double x : out.values()) {
    CHECK(x == 0.0);
  }
}

TEST_CASE("empirical risk fundamentals") {
  const GridSpec grid{4};

  SUBCASE("self-generated path has zero risk") {
    OperatorModel op{seeded_net(90), grid, Integration::FullSum};
    const NfarPath path = synthetic_path(op, random_field(grid, 91), 4);
    CHECK(empirical_risk(op, path, PairRange{0, 3}) == 0.0);
  }

  SUBCASE("zero kernel against all-ones targets") {
    OperatorModel op{zero_params(MlpArchitecture{5, {4}, 1}), grid,
                     Integration::FullSum};
    NfarPath path;
    path.fields.push_back(random_field(grid, 92));
    path.fields.push_back(GridField(grid, 1.0));
    CHECK(empirical_risk(op, path, PairRange{0, 1}) == 1.0);
  }

  SUBCASE("matches a flat reimplementation") {
    OperatorModel op{seeded_net(93), grid, Integration::FullSum};
    NfarPath path;
    for (int t = 0; t < 3; ++t) {
      path.fields.push_back(random_field(grid, 94 + t));
    }
    const double risk = empirical_risk(op, path, PairRange{0, 2});
    double acc = 0.0;
    for (int t = 0; t < 2; ++t) {
      const GridField pred = oracle_apply(op.net, path.fields[t]);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          const double r = pred(i, j) - path.fields[t + 1](i, j);
          acc += r * r;
        }
      }
    }
    CHECK(std::fabs(risk - acc / (16.0 * 2.0)) < 1e-12);
  }

  SUBCASE("risk equals the mean of per-pair field norms") {
    OperatorModel op{seeded_net(95), grid, Integration::FullSum};
    NfarPath path;
    for (int t = 0; t < 5; ++t) {
      path.fields.push_back(random_field(grid, 96 + t));
    }
    const double risk = empirical_risk(op, path, PairRange{0, 4});
    double acc = 0.0;
    for (int t = 0; t < 4; ++t) {
      GridField residual = apply_operator(op, path.fields[t]);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          residual(i, j) -= path.fields[t + 1](i, j);
        }
      }
      acc += l2_norm_sq(residual);
    }
    CHECK(std::fabs(risk - acc / 4.0) < 1e-12);
  }

  SUBCASE("empty and out-of-range pair ranges are rejected") {
    OperatorModel op{seeded_net(97), grid, Integration::FullSum};
    NfarPath path;
    for (int t = 0; t < 3; ++t) {
      path.fields.push_back(random_field(grid, 98 + t));
    }
    CHECK_THROWS_AS(empirical_risk(op, path, PairRange{1, 1}), ConfigError);
    CHECK_THROWS_AS(empirical_risk(op, path, PairRange{0, 3}), ConfigError);
  }
}

namespace {

NfarPath noisy_path(int s, int length, std::uint64_t seed) {
  NfarModel m;
  m.grid = GridSpec{s};
  auto spectrum = std::make_shared<const CirculantSpectrum>(
      build_spectrum(m.kernel, m.grid));
  NoiseSampler sampler(spectrum, seed);
  return simulate_path(m, sampler, length, 50);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs_max = 4;
  cfg.patience = 4;
  cfg.batch_size = 32;
  cfg.s_mc = 16;
  cfg.hidden = {8, 8};
  cfg.seed = 7;
  return cfg;
}

} // namespace

TEST_CASE("zero patience runs exactly one epoch") {
  const NfarPath path = noisy_path(6, 12, 101);
  TrainConfig cfg = small_config();
  cfg.patience = 0;
  const auto [model, trace] = train(path, cfg);
  CHECK(trace.stop_epoch == 1);
  CHECK(trace.rows.size() == 1);
}

TEST_CASE("training is deterministic given the seed") {
  const NfarPath path = noisy_path(6, 12, 102);
  const TrainConfig cfg = small_config();
  const auto [m1, t1] = train(path, cfg);
  const auto [m2, t2] = train(path, cfg);
  REQUIRE(t1.rows.size() == t2.rows.size());
  for (std::size_t e = 0; e < t1.rows.size(); ++e) {
    CHECK(t1.rows[e].train_loss == t2.rows[e].train_loss);
    CHECK(t1.rows[e].val_loss == t2.rows[e].val_loss);
  }
  const auto dir = std::filesystem::temp_directory_path() / "nfar_train_det";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.json", Checkpoint{m1.net, std::nullopt, cfg.seed,
                                             t1.stop_epoch});
  save_checkpoint(dir / "b.json", Checkpoint{m2.net, std::nullopt, cfg.seed,
                                             t2.stop_epoch});
  std::ifstream fa(dir / "a.json"), fb(dir / "b.json");
  const std::string sa((std::istreambuf_iterator<char>(fa)),
                       std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(fb)),
                       std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("split arithmetic and validation bookkeeping") {
  const NfarPath path = noisy_path(5, 10, 103);
  TrainConfig cfg = small_config();
  cfg.epochs_max = 2;
  cfg.patience = 2;
  const auto [model, trace] = train(path, cfg);
  // T = 10: t_train = 8, train pairs 7, validation pairs 1.
  CHECK(trace.train_pairs == 7);
  CHECK(trace.val_pairs == 1);
  for (const auto& row : trace.rows) {
    CHECK(std::isfinite(row.val_loss));
    CHECK(std::isfinite(row.train_loss));
  }
}

TEST_CASE("short paths are rejected with clear errors") {
  TrainConfig cfg = small_config();
  CHECK_THROWS_AS(train(noisy_path(5, 4, 104), cfg), ConfigError);
  // T = 5 leaves the validation pair set empty under the literal split.
  CHECK_THROWS_AS(train(noisy_path(5, 5, 105), cfg), ConfigError);
  CHECK_NOTHROW(train(noisy_path(5, 6, 106), cfg));
  cfg.patience = 10; // > epochs_max
  CHECK_THROWS_AS(train(noisy_path(5, 10, 107), cfg), ConfigError);
}

TEST_CASE("early stopping: no strict improvement in the last patience epochs") {
  const NfarPath path = noisy_path(6, 20, 108);
  TrainConfig cfg = small_config();
  cfg.epochs_max = 40;
  cfg.patience = 3;
  cfg.lr = 0.05; // coarse steps so validation stalls quickly
  const auto [model, trace] = train(path, cfg);
  if (trace.stop_epoch < cfg.epochs_max) {
    const auto& rows = trace.rows;
    REQUIRE(rows.size() >= static_cast<std::size_t>(cfg.patience) + 1);
    for (std::size_t k = rows.size() - cfg.patience; k < rows.size(); ++k) {
      double best_before = rows[0].val_loss;
      for (std::size_t e = 1; e < k; ++e) {
        best_before = std::min(best_before, rows[e].val_loss);
      }
      CHECK(rows[k].val_loss >= best_before);
    }
  }
}

TEST_CASE("realizable target: loss decreases under training") {
  OperatorModel target{seeded_net(120, {8}), GridSpec{8},
                       Integration::FullSum};
  const NfarPath path =
      synthetic_path(target, random_field(GridSpec{8}, 121, 1.5), 20);

  TrainConfig cfg;
  cfg.epochs_max = 30;
  cfg.patience = 30;
  cfg.batch_size = 64;
  cfg.integration = Integration::FullSum;
  cfg.hidden = {8};
  cfg.seed = 122;
  const auto [model, trace] = train(path, cfg);
  CHECK(trace.rows.back().train_loss < trace.rows.front().train_loss);
  CHECK(trace.rows.back().val_loss < trace.rows.front().val_loss);
}

TEST_CASE("trace csv layout") {
  const NfarPath path = noisy_path(5, 10, 109);
  TrainConfig cfg = small_config();
  cfg.epochs_max = 3;
  cfg.patience = 3;
  const auto [model, trace] = train(path, cfg);
  const auto file =
      std::filesystem::temp_directory_path() / "nfar_trace_test.csv";
  write_trace_csv(trace, file);
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_loss,val_loss,seconds");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == trace.stop_epoch);
  std::filesystem::remove(file);
}
