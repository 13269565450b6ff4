#include "nfar/model.hpp"

#include <cmath>
#include <complex>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nfar/errors.hpp"
#include "nfar/fft.hpp"

namespace nfar {

double nonlinearity(Nonlinearity tau, double x) {
  switch (tau) {
    case Nonlinearity::CosSin:
      return 1.5 + 2.5 * std::cos(x) + 2.0 * std::sin(2.0 * x);
    case Nonlinearity::Zero:
      return 0.0;
    case Nonlinearity::Identity:
      return x;
  }
  return 0.0;
}

std::string to_string(Nonlinearity tau) {
  switch (tau) {
    case Nonlinearity::CosSin: return "cos-sin";
    case Nonlinearity::Zero: return "zero";
    case Nonlinearity::Identity: return "identity";
  }
  return "?";
}

Nonlinearity nonlinearity_from_string(const std::string& name) {
  if (name == "cos-sin") return Nonlinearity::CosSin;
  if (name == "zero") return Nonlinearity::Zero;
  if (name == "identity") return Nonlinearity::Identity;
  throw ConfigError("unknown nonlinearity '" + name + "'");
}

double true_kernel(const NfarModel& m, double u1, double u2, double v1,
                   double v2, double x) {
  return m.amplitude * m.kernel(u1 - v1, u2 - v2) * nonlinearity(m.tau, x);
}

namespace {

// amplitude * K(di/S, dj/S) for integer offsets |di|, |dj| < S.
std::vector<double> kernel_table(const NfarModel& m) {
  const int s = m.grid.size;
  std::vector<double> tab(static_cast<std::size_t>(s) * s);
  for (int di = 0; di < s; ++di) {
    for (int dj = 0; dj < s; ++dj) {
      tab[static_cast<std::size_t>(di) * s + dj] =
          m.amplitude *
          m.kernel(static_cast<double>(di) / s, static_cast<double>(dj) / s);
    }
  }
  return tab;
}

void check_grid(const NfarModel& m, const GridField& z) {
  if (z.spec() != m.grid) {
    throw ShapeError("field grid " + std::to_string(z.size()) +
                     " does not match model grid " +
                     std::to_string(m.grid.size));
  }
}

bool truncated_to_zero(const NfarModel& m, const GridField& z) {
  return std::isfinite(m.trunc_level) && sup_norm(z) > m.trunc_level;
}

std::vector<double> nonlinearity_pass(const NfarModel& m,
                                      const GridField& z) {
  std::vector<double> tz(z.values().size());
  const auto v = z.values();
  for (std::size_t idx = 0; idx < tz.size(); ++idx) {
    tz[idx] = nonlinearity(m.tau, v[idx]);
  }
  return tz;
}

} // namespace

GridField apply_true_operator(const NfarModel& m, const GridField& z) {
  check_grid(m, z);
  const int s = m.grid.size;
  if (truncated_to_zero(m, z)) {
    return GridField(m.grid);
  }
  const auto tab = kernel_table(m);
  const auto tz = nonlinearity_pass(m, z);

  GridField out(m.grid);
  const double w = 1.0 / (static_cast<double>(s) * s);
  for (int i1 = 0; i1 < s; ++i1) {
    for (int j1 = 0; j1 < s; ++j1) {
      double acc = 0.0;
      for (int i2 = 0; i2 < s; ++i2) {
        const double* tab_row = tab.data() + std::abs(i1 - i2) * s;
        const double* tz_row = tz.data() + static_cast<std::size_t>(i2) * s;
        for (int j2 = 0; j2 < s; ++j2) {
          acc += tab_row[std::abs(j1 - j2)] * tz_row[j2];
        }
      }
      out(i1, j1) = acc * w;
    }
  }
  return out;
}

GridField apply_true_operator_fft(const NfarModel& m, const GridField& z) {
  check_grid(m, z);
  const int s = m.grid.size;
  if (truncated_to_zero(m, z)) {
    return GridField(m.grid);
  }
  const auto tz = nonlinearity_pass(m, z);

  // Linear (non-periodic) convolution via zero-padding to 2S.
  const int n = 2 * s;
  const std::size_t count = static_cast<std::size_t>(n) * n;
  std::vector<std::complex<double>> ker(count), sig(count);
  for (int di = -(s - 1); di <= s - 1; ++di) {
    for (int dj = -(s - 1); dj <= s - 1; ++dj) {
      const int i = (di + n) % n;
      const int j = (dj + n) % n;
      ker[static_cast<std::size_t>(i) * n + j] =
          m.amplitude *
          m.kernel(static_cast<double>(di) / s, static_cast<double>(dj) / s);
    }
  }
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      sig[static_cast<std::size_t>(i) * n + j] =
          tz[static_cast<std::size_t>(i) * s + j];
    }
  }
  Fft2d fft(n);
  fft.forward(ker.data(), ker.data());
  fft.forward(sig.data(), sig.data());
  for (std::size_t idx = 0; idx < count; ++idx) {
    ker[idx] *= sig[idx];
  }
  fft.inverse(ker.data(), ker.data());

  GridField out(m.grid);
  const double w = 1.0 / (static_cast<double>(s) * s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      out(i, j) = ker[static_cast<std::size_t>(i) * n + j].real() * w;
    }
  }
  return out;
}

GridField step(const NfarModel& m, const GridField& z,
               const GridField& noise) {
  if (noise.spec() != z.spec()) {
    throw ShapeError("noise grid does not match state grid");
  }
  GridField out = apply_true_operator(m, z);
  auto ov = out.values();
  const auto nv = noise.values();
  for (std::size_t idx = 0; idx < ov.size(); ++idx) {
    ov[idx] += nv[idx];
  }
  return out;
}

NfarPath simulate_path(const NfarModel& m, NoiseSampler& sampler, int length,
                       int burn_in) {
  if (length < 1) {
    throw ConfigError("path length must be >= 1");
  }
  if (burn_in < 0) {
    throw ConfigError("burn-in must be >= 0");
  }
  if (sampler.spectrum().grid != m.grid) {
    throw ShapeError("sampler grid does not match model grid");
  }

  constexpr double kOverflowGuard = 1e6;
  const int total = burn_in + length;

  NfarPath path;
  path.meta = PathMeta{sampler.stream_id(), burn_in,      m.kernel.scale,
                       m.amplitude,         m.tau,        m.trunc_level};
  path.fields.reserve(static_cast<std::size_t>(length));

  GridField state(m.grid); // initial state: the zero field
  if (burn_in == 0) {
    path.fields.push_back(state);
  }
  for (int t = 2; t <= total; ++t) {
    const GridField noise = sampler.sample();
    state = step(m, state, noise);
    if (sup_norm(state) > kOverflowGuard) {
      throw NumericError("simulation overflow at timestep " +
                         std::to_string(t));
    }
    if (t > burn_in) {
      path.fields.push_back(state);
    }
  }
  return path;
}

NfarPath downsample(const NfarPath& path, GridSpec target) {
  NfarPath out;
  out.meta = path.meta;
  out.fields.reserve(path.fields.size());
  for (const auto& f : path.fields) {
    out.fields.push_back(downsample(f, target));
  }
  return out;
}

void write_path(const NfarPath& path, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta{
      {"length", path.length()},
      {"grid_size", path.grid().size},
      {"burn_in", path.meta.burn_in},
      {"noise_stream", path.meta.noise_stream},
      {"kernel_scale", path.meta.kernel_scale},
      {"amplitude", path.meta.amplitude},
      {"nonlinearity", to_string(path.meta.tau)},
      {"trunc_level", std::isfinite(path.meta.trunc_level)
                          ? nlohmann::json(path.meta.trunc_level)
                          : nlohmann::json()},
  };
  char name[32];
  for (int t = 0; t < path.length(); ++t) {
    std::snprintf(name, sizeof name, "frame_%05d.csv", t);
    write_csv(path.fields[static_cast<std::size_t>(t)], dir / name);
  }
  io::atomic_write(dir / "meta.json", meta.dump(2) + "\n");
}

NfarPath read_path(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) {
    throw IoError("cannot open " + (dir / "meta.json").string());
  }
  nlohmann::json meta = nlohmann::json::parse(in);
  NfarPath path;
  path.meta.burn_in = meta.value("burn_in", 0);
  path.meta.noise_stream = meta.value("noise_stream", std::uint64_t{0});
  path.meta.kernel_scale = meta.value("kernel_scale", 5.0);
  path.meta.amplitude = meta.value("amplitude", 5.0);
  path.meta.tau =
      nonlinearity_from_string(meta.value("nonlinearity", "cos-sin"));
  if (meta.contains("trunc_level") && !meta["trunc_level"].is_null()) {
    path.meta.trunc_level = meta["trunc_level"].get<double>();
  }
  const int length = meta.at("length").get<int>();
  char name[32];
  path.fields.reserve(static_cast<std::size_t>(length));
  for (int t = 0; t < length; ++t) {
    std::snprintf(name, sizeof name, "frame_%05d.csv", t);
    path.fields.push_back(read_csv(dir / name));
  }
  return path;
}

} // namespace nfar
