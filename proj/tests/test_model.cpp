#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "nfar/model.hpp"

using namespace nfar;

namespace {

NfarModel paper_model(int s) {
  NfarModel m;
  m.grid = GridSpec{s};
  return m;
}

// Reference quadruple-loop evaluation straight from the definition.
GridField oracle_apply(const NfarModel& m, const GridField& z) {
  const int s = m.grid.size;
  GridField out(m.grid);
  for (int i1 = 0; i1 < s; ++i1) {
    for (int j1 = 0; j1 < s; ++j1) {
      double acc = 0.0;
      for (int i2 = 0; i2 < s; ++i2) {
        for (int j2 = 0; j2 < s; ++j2) {
          acc += true_kernel(m, double(i1) / s, double(j1) / s, double(i2) / s,
                             double(j2) / s, z(i2, j2));
        }
      }
      out(i1, j1) = acc / (double(s) * s);
    }
  }
  return out;
}

GridField random_field(GridSpec spec, rng::Stream& stream, double scale = 1.0) {
  GridField f(spec);
  for (auto& x : f.values()) {
    x = scale * stream.normal();
  }
  return f;
}

} // namespace

TEST_CASE("true kernel hand values") {
  const NfarModel m = paper_model(4);
  CHECK(true_kernel(m, 0, 0, 0, 0, 0) == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(true_kernel(m, 0, 0, 0.5, 0, 0) ==
        doctest::Approx(20.0 * std::exp(-1.25)).epsilon(1e-14));
  rng::Stream stream(3);
  for (int rep = 0; rep < 200; ++rep) {
    const double v = true_kernel(m, stream.uniform(0, 1), stream.uniform(0, 1),
                                 stream.uniform(0, 1), stream.uniform(0, 1),
                                 stream.normal() * 10);
    CHECK(std::fabs(v) <= 30.0);
  }
}

TEST_CASE("nonlinearity variants") {
  CHECK(nonlinearity(Nonlinearity::CosSin, 0.0) == doctest::Approx(4.0));
  CHECK(nonlinearity(Nonlinearity::Zero, 3.7) == 0.0);
  CHECK(nonlinearity(Nonlinearity::Identity, -2.5) == -2.5);
  CHECK(nonlinearity_from_string("cos-sin") == Nonlinearity::CosSin);
  CHECK_THROWS_AS(nonlinearity_from_string("cubic"), ConfigError);
}

TEST_CASE("transition operator equals the quadruple-loop oracle") {
  rng::Stream stream(21);
  for (const int s : {4, 8}) {
    const NfarModel m = paper_model(s);
    for (int rep = 0; rep < 3; ++rep) {
      const GridField z = random_field(m.grid, stream, 2.0);
      const GridField fast = apply_true_operator(m, z);
      const GridField slow = oracle_apply(m, z);
      for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
          CHECK(fast(i, j) == doctest::Approx(slow(i, j)).epsilon(1e-12));
        }
      }
      CHECK(sup_norm(fast) <= 30.0);
    }
  }
}

TEST_CASE("zero input gives the kernel average times tau(0)") {
  const NfarModel m = paper_model(4);
  const GridField out = apply_true_operator(m, GridField(m.grid));
  double mean_k = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      mean_k += m.kernel(i / 4.0, j / 4.0);
    }
  }
  mean_k /= 16.0;
  CHECK(out(0, 0) == doctest::Approx(20.0 * mean_k).epsilon(1e-13));
}

TEST_CASE("finite truncation level zeroes large inputs") {
  NfarModel m = paper_model(4);
  m.trunc_level = 1.0;
  const GridField z(m.grid, 2.0);
  const GridField out = apply_true_operator(m, z);
  for (double x : out.values()) {
    CHECK(x == 0.0);
  }
  m.trunc_level = 3.0; // now below the threshold: untruncated
  const GridField out2 = apply_true_operator(m, z);
  CHECK(sup_norm(out2) > 0.0);
}

TEST_CASE("fft convolution path matches the direct sum") {
  rng::Stream stream(33);
  const NfarModel m = paper_model(16);
  for (int rep = 0; rep < 3; ++rep) {
    const GridField z = random_field(m.grid, stream, 2.0);
    const GridField direct = apply_true_operator(m, z);
    const GridField fast = apply_true_operator_fft(m, z);
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 16; ++j) {
        CHECK(std::fabs(direct(i, j) - fast(i, j)) < 1e-10);
      }
    }
  }
}

TEST_CASE("step is the operator plus noise") {
  rng::Stream stream(5);
  const NfarModel m = paper_model(6);
  const GridField z = random_field(m.grid, stream);
  const GridField noise = random_field(m.grid, stream);
  const GridField applied = apply_true_operator(m, z);
  const GridField next = step(m, z, noise);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      CHECK(next(i, j) == applied(i, j) + noise(i, j));
    }
  }
  CHECK(sup_norm(next) <= 30.0 + sup_norm(noise) + 1e-12);
  CHECK_THROWS_AS(step(m, z, GridField(GridSpec{5})), ShapeError);
}

TEST_CASE("simulate_path basics") {
  const NfarModel m = paper_model(6);
  auto spectrum = std::make_shared<const CirculantSpectrum>(
      build_spectrum(m.kernel, m.grid));

  SUBCASE("no burn-in, length one: the initial zero field") {
    NoiseSampler sampler(spectrum, 7);
    const NfarPath path = simulate_path(m, sampler, 1, 0);
    REQUIRE(path.length() == 1);
    for (double x : path.fields[0].values()) {
      CHECK(x == 0.0);
    }
  }

  SUBCASE("deterministic replay") {
    NoiseSampler a(spectrum, 7), b(spectrum, 7);
    const NfarPath pa = simulate_path(m, a, 5, 10);
    const NfarPath pb = simulate_path(m, b, 5, 10);
    REQUIRE(pa.length() == 5);
    for (int t = 0; t < 5; ++t) {
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          CHECK(pa.fields[t](i, j) == pb.fields[t](i, j));
        }
      }
    }
  }

  SUBCASE("overflow reports the offending timestep") {
    NfarModel unstable = m;
    unstable.tau = Nonlinearity::Identity;
    unstable.amplitude = 1e4; // expansive linear map
    NoiseSampler sampler(spectrum, 7);
    CHECK_THROWS_AS(simulate_path(unstable, sampler, 50, 0), NumericError);
  }
}

TEST_CASE("path downsample and disk round trip") {
  const NfarModel m = paper_model(8);
  auto spectrum = std::make_shared<const CirculantSpectrum>(
      build_spectrum(m.kernel, m.grid));
  NoiseSampler sampler(spectrum, 11);
  const NfarPath path = simulate_path(m, sampler, 4, 3);

  const NfarPath small = downsample(path, GridSpec{4});
  CHECK(small.length() == 4);
  CHECK(small.grid().size == 4);
  CHECK(small.fields[2](1, 3) == path.fields[2](2, 6));

  const auto dir = std::filesystem::temp_directory_path() / "nfar_path_test";
  std::filesystem::remove_all(dir);
  write_path(path, dir);
  const NfarPath back = read_path(dir);
  REQUIRE(back.length() == path.length());
  CHECK(back.meta.burn_in == 3);
  for (int t = 0; t < path.length(); ++t) {
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        CHECK(back.fields[t](i, j) == path.fields[t](i, j));
      }
    }
  }
  std::filesystem::remove_all(dir);
}
