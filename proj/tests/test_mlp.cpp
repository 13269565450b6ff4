#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nfar/mlp.hpp"
#include "nfar/errors.hpp"

using namespace nfar;

namespace {

Eigen::MatrixXd random_batch(int rows, int cols, rng::Stream& stream) {
  Eigen::MatrixXd x(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      x(r, c) = stream.normal();
    }
  }
  return x;
}

double mse(const MlpParams& p, const Eigen::MatrixXd& x,
           const Eigen::VectorXd& y) {
  const Eigen::VectorXd out = forward(p, x);
  return (out - y).squaredNorm() / x.rows();
}

} // namespace

TEST_CASE("glorot bounds and zero biases") {
  const MlpArchitecture arch; // 5 -> 32^5 -> 1
  rng::Stream stream(1);
  const MlpParams p = glorot_init(arch, stream);
  REQUIRE(p.weights.size() == 6);

  const double bound1 = std::sqrt(6.0 / (5 + 32));
  const double bound6 = std::sqrt(6.0 / (32 + 1));
  CHECK(bound1 == doctest::Approx(0.402694).epsilon(1e-5));
  CHECK(bound6 == doctest::Approx(0.426401).epsilon(1e-5));

  CHECK(p.weights[0].cwiseAbs().maxCoeff() <= bound1);
  CHECK(p.weights[5].cwiseAbs().maxCoeff() <= bound6);
  CHECK(p.weights[0].cwiseAbs().maxCoeff() > 0.5 * bound1); // actually random
  for (const auto& b : p.biases) {
    CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("zero network maps everything to zero") {
  const MlpArchitecture arch;
  const MlpParams p = zero_params(arch);
  rng::Stream stream(2);
  const Eigen::VectorXd out = forward(p, random_batch(7, 5, stream));
  for (int i = 0; i < out.size(); ++i) {
    CHECK(out(i) == 0.0);
  }
}

TEST_CASE("one-wide chain computes the hand composition") {
  MlpArchitecture arch;
  arch.input_dim = 1;
  arch.hidden = {1, 1, 1, 1, 1};
  MlpParams p = zero_params(arch);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    p.weights[l](0, 0) = 2.0;
    p.biases[l](0) = 1.0;
  }
  Eigen::MatrixXd x(1, 1);
  x(0, 0) = 1.0;
  // 1 -> 3 -> 7 -> 15 -> 31 -> 63 -> 127 (ReLU transparent on positives).
  CHECK(forward(p, x)(0) == 127.0);
}

TEST_CASE("identical rows give identical outputs") {
  const MlpArchitecture arch;
  rng::Stream stream(3);
  const MlpParams p = glorot_init(arch, stream);
  Eigen::MatrixXd x = random_batch(1, 5, stream);
  Eigen::MatrixXd batch(6, 5);
  for (int r = 0; r < 6; ++r) {
    batch.row(r) = x.row(0);
  }
  const Eigen::VectorXd out = forward(p, batch);
  for (int r = 1; r < 6; ++r) {
    CHECK(out(r) == out(0));
  }
}

TEST_CASE("parameter count of the experiment architecture") {
  const MlpArchitecture arch;
  // 5*32+32 + 4*(32*32+32) + 32+1
  CHECK(arch.param_count() == 4449);
  MlpArchitecture tiny;
  tiny.hidden = {8};
  CHECK(tiny.param_count() == 5 * 8 + 8 + 8 + 1);
}

TEST_CASE("backward matches central finite differences") {
  for (const std::uint64_t seed : {10u, 11u, 12u}) {
    rng::Stream stream(seed);
    const MlpArchitecture arch;
    MlpParams p = glorot_init(arch, stream);
    const Eigen::MatrixXd x = random_batch(13, 5, stream);
    Eigen::VectorXd y(13);
    for (int i = 0; i < 13; ++i) {
      y(i) = stream.normal();
    }
    const MlpGradients g = backward(p, x, y);

    const double h = 1e-5;
    for (int probe = 0; probe < 20; ++probe) {
      const auto layer = stream.index(p.weights.size());
      const bool is_bias = stream.index(2) == 1;
      if (is_bias) {
        const auto i = stream.index(static_cast<std::size_t>(p.biases[layer].size()));
        const double save = p.biases[layer](static_cast<Eigen::Index>(i));
        p.biases[layer](static_cast<Eigen::Index>(i)) = save + h;
        const double up = mse(p, x, y);
        p.biases[layer](static_cast<Eigen::Index>(i)) = save - h;
        const double down = mse(p, x, y);
        p.biases[layer](static_cast<Eigen::Index>(i)) = save;
        const double fd = (up - down) / (2 * h);
        const double an = g.biases[layer](static_cast<Eigen::Index>(i));
        CHECK(std::fabs(fd - an) <=
              1e-5 * std::max({std::fabs(fd), std::fabs(an), 1e-4}));
      } else {
        const auto r = stream.index(static_cast<std::size_t>(p.weights[layer].rows()));
        const auto c = stream.index(static_cast<std::size_t>(p.weights[layer].cols()));
        const double save = p.weights[layer](static_cast<Eigen::Index>(r),
                                             static_cast<Eigen::Index>(c));
        p.weights[layer](static_cast<Eigen::Index>(r),
                         static_cast<Eigen::Index>(c)) = save + h;
        const double up = mse(p, x, y);
        p.weights[layer](static_cast<Eigen::Index>(r),
                         static_cast<Eigen::Index>(c)) = save - h;
        const double down = mse(p, x, y);
        p.weights[layer](static_cast<Eigen::Index>(r),
                         static_cast<Eigen::Index>(c)) = save;
        const double fd = (up - down) / (2 * h);
        const double an = g.weights[layer](static_cast<Eigen::Index>(r),
                                           static_cast<Eigen::Index>(c));
        CHECK(std::fabs(fd - an) <=
              1e-5 * std::max({std::fabs(fd), std::fabs(an), 1e-4}));
      }
    }
  }
}

TEST_CASE("gradient is linear in the residual at fixed activations") {
  rng::Stream stream(14);
  const MlpArchitecture arch;
  const MlpParams p = glorot_init(arch, stream);
  const Eigen::MatrixXd x = random_batch(9, 5, stream);
  const Eigen::VectorXd out = forward(p, x);
  Eigen::VectorXd r(9);
  for (int i = 0; i < 9; ++i) {
    r(i) = stream.normal();
  }
  const MlpGradients g1 = backward(p, x, out - r);
  const MlpGradients g2 = backward(p, x, out - 2.0 * r);
  for (std::size_t l = 0; l < g1.weights.size(); ++l) {
    CHECK((g2.weights[l] - 2.0 * g1.weights[l]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g2.biases[l] - 2.0 * g1.biases[l]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("final layer scaling scales outputs") {
  rng::Stream stream(15);
  const MlpArchitecture arch;
  MlpParams p = glorot_init(arch, stream);
  const Eigen::MatrixXd x = random_batch(11, 5, stream);
  const Eigen::VectorXd base = forward(p, x);
  const double alpha = -2.5;
  p.weights.back() *= alpha;
  p.biases.back() *= alpha;
  const Eigen::VectorXd scaled = forward(p, x);
  for (int i = 0; i < 11; ++i) {
    CHECK(scaled(i) == doctest::Approx(alpha * base(i)).epsilon(1e-12));
  }
}

TEST_CASE("adam first two steps match the closed form") {
  MlpArchitecture arch;
  arch.input_dim = 1;
  arch.hidden = {};
  MlpParams p = zero_params(arch); // single 1x1 affine layer
  AdamState st = make_adam_state(arch);
  MlpGradients g = zero_gradients(arch);
  g.weights[0](0, 0) = 1.0;

  adam_step(st, p, g);
  // m = 0.1, v = 0.001, m_hat = v_hat = 1 (up to fp), theta = -lr/(1+eps)
  const double expected1 = -(1e-3 * (0.1 / (1 - 0.9))) /
                           (std::sqrt(0.001 / (1 - 0.999)) + 1e-8);
  CHECK(std::fabs(p.weights[0](0, 0) - expected1) < 1e-12);
  CHECK(std::fabs(p.weights[0](0, 0) - (-0.000999999990)) < 1e-12);
  CHECK(p.biases[0](0) == 0.0); // zero gradient leaves it unchanged
  CHECK(st.t == 1);

  adam_step(st, p, g);
  const double m2 = 0.9 * 0.1 + 0.1;
  const double v2 = 0.999 * 0.001 + 0.001;
  const double expected2 =
      expected1 - 1e-3 * (m2 / (1 - 0.9 * 0.9)) /
                      (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(std::fabs(p.weights[0](0, 0) - expected2) < 1e-12);
  CHECK(std::fabs(p.weights[0](0, 0) - (-2e-3)) < 1e-9);
}

TEST_CASE("adam with zero gradients is the identity") {
  rng::Stream stream(16);
  const MlpArchitecture arch;
  MlpParams p = glorot_init(arch, stream);
  const MlpParams before = p;
  AdamState st = make_adam_state(arch);
  adam_step(st, p, zero_gradients(arch));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    CHECK((p.weights[l] - before.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam is bit-deterministic") {
  rng::Stream stream(17);
  const MlpArchitecture arch;
  MlpParams pa = glorot_init(arch, stream);
  MlpParams pb = pa;
  AdamState sa = make_adam_state(arch);
  AdamState sb = make_adam_state(arch);
  const Eigen::MatrixXd x = random_batch(8, 5, stream);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(8);
  for (int step = 0; step < 5; ++step) {
    adam_step(sa, pa, backward(pa, x, y));
    adam_step(sb, pb, backward(pb, x, y));
  }
  for (std::size_t l = 0; l < pa.weights.size(); ++l) {
    CHECK((pa.weights[l] - pb.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pa.biases[l] - pb.biases[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("checkpoint json round trip is exact") {
  rng::Stream stream(18);
  MlpArchitecture arch;
  arch.hidden = {8, 8};
  Checkpoint ck;
  ck.params = glorot_init(arch, stream);
  ck.adam = make_adam_state(arch);
  ck.adam->t = 7;
  ck.adam->m_w[0](0, 0) = 0.125;
  ck.seed = 987654321;
  ck.epoch = 42;

  const auto file =
      std::filesystem::temp_directory_path() / "nfar_ckpt_test.json";
  save_checkpoint(file, ck);
  const Checkpoint back = load_checkpoint(file);
  CHECK(back.params.arch == arch);
  CHECK(back.seed == ck.seed);
  CHECK(back.epoch == 42);
  REQUIRE(back.adam.has_value());
  CHECK(back.adam->t == 7);
  CHECK(back.adam->m_w[0](0, 0) == 0.125);
  for (std::size_t l = 0; l < ck.params.weights.size(); ++l) {
    CHECK((back.params.weights[l] - ck.params.weights[l])
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((back.params.biases[l] - ck.params.biases[l]).cwiseAbs().maxCoeff() ==
          0.0);
  }
  std::filesystem::remove(file);
}

TEST_CASE("shape errors") {
  const MlpArchitecture arch;
  rng::Stream stream(19);
  const MlpParams p = glorot_init(arch, stream);
  CHECK_THROWS_AS(forward(p, random_batch(3, 4, stream)), ShapeError);
  CHECK_THROWS_AS(backward(p, random_batch(3, 5, stream),
                           Eigen::VectorXd::Zero(2)),
                  ShapeError);
}
