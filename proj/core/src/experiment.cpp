#include "nfar/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "nfar/errors.hpp"
#include "nfar/toml.hpp"

namespace nfar {

NfarModel ExperimentConfig::sim_model() const {
  NfarModel m;
  m.kernel.scale = kernel_scale;
  m.amplitude = amplitude;
  m.tau = tau;
  m.grid = GridSpec{sim_grid};
  if (trunc_level) m.trunc_level = *trunc_level;
  return m;
}

NfarModel ExperimentConfig::learn_model() const {
  NfarModel m = sim_model();
  m.grid = GridSpec{learn_grid};
  return m;
}

void ExperimentConfig::validate() const {
  if (learn_grid < 2 || sim_grid < 2) {
    throw ConfigError("grid sizes must be >= 2");
  }
  if (sim_grid % learn_grid != 0) {
    throw ConfigError("learn_grid must divide sim_grid");
  }
  if (replications < 1) {
    throw ConfigError("replications must be >= 1");
  }
  if (t_values.empty()) {
    throw ConfigError("t_values must be non-empty");
  }
  for (std::size_t i = 1; i < t_values.size(); ++i) {
    if (t_values[i] <= t_values[i - 1]) {
      throw ConfigError("t_values must be strictly increasing");
    }
  }
  if (burn_in < 0) {
    throw ConfigError("burn_in must be >= 0");
  }
}

namespace {

using toml::Table;

// Strict section reader: every key must be consumed by one of the
// handlers; anything left over is an error.
class SectionReader {
public:
  SectionReader(const Table* table, std::string name)
      : table_(table), name_(std::move(name)) {}

  const toml::Value* get(const std::string& key) {
    consumed_.insert(key);
    if (!table_) return nullptr;
    const auto it = table_->find(key);
    return it == table_->end() ? nullptr : &it->second;
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, value] : *table_) {
      if (!consumed_.count(key)) {
        throw ConfigError("unknown key '" + key + "' in section [" + name_ +
                          "]");
      }
    }
  }

private:
  const Table* table_;
  std::string name_;
  std::set<std::string> consumed_;
};

const Table* find_section(const toml::Document& doc, const std::string& name) {
  const auto it = doc.sections.find(name);
  return it == doc.sections.end() ? nullptr : &it->second;
}

} // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const auto doc = toml::load(path);
  for (const auto& [name, table] : doc.sections) {
    if (name != "model" && name != "sim" && name != "train" &&
        name != "sweep") {
      throw ConfigError("unknown section [" + name + "]");
    }
  }
  if (!doc.root.empty()) {
    throw ConfigError("top-level key '" + doc.root.begin()->first +
                      "' outside any section");
  }

  ExperimentConfig cfg;

  SectionReader model(find_section(doc, "model"), "model");
  if (const auto* v = model.get("kernel_scale")) cfg.kernel_scale = v->as_double();
  if (const auto* v = model.get("amplitude")) cfg.amplitude = v->as_double();
  if (const auto* v = model.get("nonlinearity")) {
    cfg.tau = nonlinearity_from_string(v->as_string());
  }
  if (const auto* v = model.get("trunc_level")) cfg.trunc_level = v->as_double();
  model.finish();

  SectionReader sim(find_section(doc, "sim"), "sim");
  if (const auto* v = sim.get("sim_grid")) cfg.sim_grid = static_cast<int>(v->as_integer());
  if (const auto* v = sim.get("learn_grid")) cfg.learn_grid = static_cast<int>(v->as_integer());
  if (const auto* v = sim.get("burn_in")) cfg.burn_in = static_cast<int>(v->as_integer());
  sim.finish();

  SectionReader train(find_section(doc, "train"), "train");
  if (const auto* v = train.get("epochs_max")) cfg.train.epochs_max = static_cast<int>(v->as_integer());
  if (const auto* v = train.get("patience")) cfg.train.patience = static_cast<int>(v->as_integer());
  if (const auto* v = train.get("batch_size")) cfg.train.batch_size = static_cast<int>(v->as_integer());
  if (const auto* v = train.get("lr")) cfg.train.lr = v->as_double();
  if (const auto* v = train.get("train_fraction")) cfg.train.train_fraction = v->as_double();
  if (const auto* v = train.get("s_mc")) cfg.train.s_mc = static_cast<int>(v->as_integer());
  if (const auto* v = train.get("seed")) cfg.train.seed = static_cast<std::uint64_t>(v->as_integer());
  if (const auto* v = train.get("integration")) {
    cfg.train.integration = integration_from_string(v->as_string());
  }
  if (const auto* v = train.get("hidden")) {
    cfg.train.hidden.clear();
    for (const auto w : v->as_integer_array()) {
      cfg.train.hidden.push_back(static_cast<int>(w));
    }
  }
  if (const auto* v = train.get("restore_best")) cfg.train.restore_best = v->as_boolean();
  train.finish();

  SectionReader sweep(find_section(doc, "sweep"), "sweep");
  if (const auto* v = sweep.get("t_values")) {
    cfg.t_values.clear();
    for (const auto t : v->as_integer_array()) {
      cfg.t_values.push_back(static_cast<int>(t));
    }
  }
  if (const auto* v = sweep.get("replications")) cfg.replications = static_cast<int>(v->as_integer());
  if (const auto* v = sweep.get("master_seed")) cfg.master_seed = static_cast<std::uint64_t>(v->as_integer());
  sweep.finish();

  cfg.validate();
  return cfg;
}

double generalization_gap(const GridField& learned, const GridField& truth) {
  if (learned.spec() != truth.spec()) {
    throw ShapeError("operator outputs live on different grids");
  }
  GridField diff = learned;
  auto dv = diff.values();
  const auto tv = truth.values();
  for (std::size_t i = 0; i < dv.size(); ++i) {
    dv[i] -= tv[i];
  }
  return l2_norm_sq(diff);
}

ReplicationOutput run_replication(
    const ExperimentConfig& cfg, int b, int t_len,
    std::shared_ptr<const CirculantSpectrum> spectrum) {
  cfg.validate();
  const NfarModel sim = cfg.sim_model();
  const NfarModel learn = cfg.learn_model();
  const GridSpec learn_grid{cfg.learn_grid};

  if (!spectrum) {
    spectrum = std::make_shared<const CirculantSpectrum>(
        build_spectrum(sim.kernel, sim.grid));
  }

  const auto bb = static_cast<std::uint64_t>(b);
  const auto tt = static_cast<std::uint64_t>(t_len);

  NoiseSampler path_sampler(
      spectrum, rng::derive(cfg.master_seed, bb, tt, rng::Role::TrainPath));
  const NfarPath sim_path = simulate_path(sim, path_sampler, t_len, cfg.burn_in);
  const NfarPath learn_path = downsample(sim_path, learn_grid);

  TrainConfig tc = cfg.train;
  tc.seed = rng::derive(cfg.master_seed, bb, tt, rng::Role::TrainSeed);
  auto [model, trace] = train(learn_path, tc);

  // Independent test point with the marginal law of the first retained
  // state: a fresh burn-in path of length one.
  NoiseSampler test_sampler(
      spectrum, rng::derive(cfg.master_seed, bb, tt, rng::Role::TestPoint));
  const NfarPath test_path = simulate_path(sim, test_sampler, 1, cfg.burn_in);
  const GridField test_field = downsample(test_path.fields.front(), learn_grid);

  const GridField truth = apply_true_operator(learn, test_field);
  OperatorModel eval = std::move(model);
  eval.integration = Integration::FullSum; // gap is evaluated exactly
  const GridField predicted = apply_operator(eval, test_field);

  ReplicationOutput out{
      CellResult{b, t_len, true, generalization_gap(predicted, truth),
                 trace.stop_epoch, trace.wall_seconds, {}},
      std::move(trace), test_field, truth, predicted};
  return out;
}

namespace {

nlohmann::json field_to_json_values(const GridField& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < f.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < f.size(); ++j) {
      row.push_back(f(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

GridField field_from_json_values(const nlohmann::json& rows) {
  std::vector<double> values;
  const int size = static_cast<int>(rows.size());
  values.reserve(static_cast<std::size_t>(size) * size);
  for (const auto& row : rows) {
    for (const auto& x : row) {
      values.push_back(x.get<double>());
    }
  }
  return GridField(GridSpec{size}, std::move(values));
}

std::string cell_file_name(int b, int t_len) {
  return "cell_b" + std::to_string(b) + "_T" + std::to_string(t_len) +
         ".json";
}

struct CellJob {
  int b = 0;
  int t_len = 0;
  bool designated = false;
};

struct DesignatedSurfaces {
  GridField test_field;
  GridField truth;
  GridField predicted;
  bool present = false;
};

} // namespace

std::vector<SummaryRow> SweepResult::summary() const {
  std::vector<SummaryRow> rows;
  for (const int t : cfg.t_values) {
    SummaryRow row;
    row.t_len = t;
    double sum = 0.0;
    for (const auto& c : cells) {
      if (c.t_len == t && c.ok) {
        sum += c.g;
        ++row.n;
      }
    }
    if (row.n == 0) continue;
    row.mean_g = sum / row.n;
    double ss = 0.0;
    for (const auto& c : cells) {
      if (c.t_len == t && c.ok) {
        ss += (c.g - row.mean_g) * (c.g - row.mean_g);
      }
    }
    row.std_g = row.n > 1 ? std::sqrt(ss / (row.n - 1)) : 0.0;
    row.stderr_g = row.std_g / std::sqrt(static_cast<double>(row.n));
    rows.push_back(row);
  }
  return rows;
}

bool SweepResult::complete() const {
  return std::all_of(cells.begin(), cells.end(),
                     [](const CellResult& c) { return c.ok; });
}

SweepResult run_sweep(const ExperimentConfig& cfg,
                      const std::filesystem::path& out_dir, int workers) {
  cfg.validate();
  if (workers < 1) {
    throw ConfigError("worker count must be >= 1");
  }
  const auto cells_dir = out_dir / "cells";
  std::filesystem::create_directories(cells_dir);

  // Run metadata: configuration echo plus the fixed optimizer and Monte
  // Carlo policies (no volatile content).
  {
    nlohmann::json meta;
    meta["sweep"] = {{"replications", cfg.replications},
                     {"t_values", cfg.t_values},
                     {"master_seed", cfg.master_seed}};
    meta["sim"] = {{"sim_grid", cfg.sim_grid},
                   {"learn_grid", cfg.learn_grid},
                   {"burn_in", cfg.burn_in}};
    meta["model"] = {{"kernel_scale", cfg.kernel_scale},
                     {"amplitude", cfg.amplitude},
                     {"nonlinearity", to_string(cfg.tau)}};
    meta["train"] = {{"epochs_max", cfg.train.epochs_max},
                     {"patience", cfg.train.patience},
                     {"batch_size", cfg.train.batch_size},
                     {"lr", cfg.train.lr},
                     {"train_fraction", cfg.train.train_fraction},
                     {"s_mc", cfg.train.s_mc},
                     {"integration", to_string(cfg.train.integration)},
                     {"hidden", cfg.train.hidden},
                     {"restore_best", cfg.train.restore_best}};
    meta["adam"] = {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}};
    meta["mc_policy"] = {
        {"train_points", "resampled per minibatch"},
        {"validation_points", "fixed per run"},
    };
    meta["designated_cell"] = {{"b", 0}, {"T", cfg.t_values.back()}};
    io::atomic_write(out_dir / "meta.json", meta.dump(2) + "\n");
  }

  std::vector<CellJob> jobs;
  for (const int t : cfg.t_values) {
    for (int b = 0; b < cfg.replications; ++b) {
      jobs.push_back(CellJob{b, t, b == 0 && t == cfg.t_values.back()});
    }
  }

  auto spectrum = std::make_shared<const CirculantSpectrum>(
      build_spectrum(StationaryKernel{cfg.kernel_scale},
                     GridSpec{cfg.sim_grid}));

  std::vector<CellResult> results(jobs.size());
  DesignatedSurfaces surfaces;
  std::mutex io_mutex;
  std::atomic<std::size_t> next{0};

  const auto load_cell = [&](const CellJob& job, CellResult& out) -> bool {
    const auto file = cells_dir / cell_file_name(job.b, job.t_len);
    std::ifstream in(file);
    if (!in) return false;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      out.b = j.at("b").get<int>();
      out.t_len = j.at("T").get<int>();
      out.g = j.at("g").get<double>();
      out.stop_epoch = j.at("stop_epoch").get<int>();
      out.seconds = j.at("seconds").get<double>();
      out.ok = true;
      if (job.designated) {
        if (!j.contains("test_field")) return false;
        std::lock_guard<std::mutex> lock(io_mutex);
        surfaces.test_field = field_from_json_values(j.at("test_field"));
        surfaces.truth = field_from_json_values(j.at("true_output"));
        surfaces.predicted = field_from_json_values(j.at("predicted_output"));
        surfaces.present = true;
      }
      return out.b == job.b && out.t_len == job.t_len;
    } catch (const std::exception&) {
      return false; // partial or corrupt cell file: recompute
    }
  };

  const auto worker_fn = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= jobs.size()) return;
      const CellJob& job = jobs[idx];
      CellResult& slot = results[idx];
      if (load_cell(job, slot)) {
        continue;
      }
      try {
        ReplicationOutput rep = run_replication(cfg, job.b, job.t_len, spectrum);
        slot = rep.cell;
        nlohmann::json j{{"b", slot.b},
                         {"T", slot.t_len},
                         {"g", slot.g},
                         {"stop_epoch", slot.stop_epoch},
                         {"seconds", slot.seconds}};
        if (job.designated) {
          j["test_field"] = field_to_json_values(rep.test_field);
          j["true_output"] = field_to_json_values(rep.true_output);
          j["predicted_output"] = field_to_json_values(rep.learned_output);
          std::lock_guard<std::mutex> lock(io_mutex);
          surfaces.test_field = rep.test_field;
          surfaces.truth = rep.true_output;
          surfaces.predicted = rep.learned_output;
          surfaces.present = true;
        }
        io::atomic_write(cells_dir / cell_file_name(job.b, job.t_len),
                         j.dump() + "\n");
        std::lock_guard<std::mutex> lock(io_mutex);
        std::ofstream index(out_dir / "index.txt", std::ios::app);
        index << job.b << ',' << job.t_len << ','
              << cell_file_name(job.b, job.t_len) << '\n';
      } catch (const std::exception& e) {
        slot.b = job.b;
        slot.t_len = job.t_len;
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };

  if (workers == 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(worker_fn);
    }
    for (auto& t : pool) {
      t.join();
    }
  }

  SweepResult result;
  result.cfg = cfg;
  result.cells = std::move(results);

  if (surfaces.present) {
    write_csv(surfaces.test_field, out_dir / "test_field.csv");
    write_csv(surfaces.truth, out_dir / "true.csv");
    write_csv(surfaces.predicted, out_dir / "predicted.csv");
  }
  emit_artifacts(result, out_dir);
  return result;
}

double loglog_slope(const std::vector<SummaryRow>& rows) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.mean_g <= 0.0) continue;
    const double x = std::log10(static_cast<double>(r.t_len));
    const double y = std::log10(r.mean_g);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) {
    throw ConfigError("log-log slope needs at least two positive points");
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

std::string svg_loglog(const std::vector<SummaryRow>& rows) {
  const double width = 640, height = 480;
  const double ml = 80, mr = 30, mt = 30, mb = 60;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : rows) {
    const double x = std::log10(static_cast<double>(r.t_len));
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    const double lo = std::max(r.mean_g - r.stderr_g, r.mean_g * 1e-3);
    const double hi = r.mean_g + r.stderr_g;
    if (r.mean_g > 0.0) {
      ymin = std::min(ymin, std::log10(lo));
      ymax = std::max(ymax, std::log10(hi));
    }
  }
  if (xmax <= xmin) {
    xmax = xmin + 1;
  }
  if (ymax <= ymin) {
    ymax = ymin + 1;
  }
  const double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  const auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  const auto num = [](double v) { return io::format_double(v); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
       "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + " " +
       num(height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  s += "<line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" +
       num(width - mr) + "\" y2=\"" + num(height - mb) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) +
       "\" y2=\"" + num(height - mb) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + num((ml + width - mr) / 2) + "\" y=\"" +
       num(height - 15) +
       "\" text-anchor=\"middle\" font-size=\"14\">sample size T (log10)"
       "</text>\n";
  s += "<text x=\"18\" y=\"" + num((mt + height - mb) / 2) +
       "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 " +
       num((mt + height - mb) / 2) +
       ")\">generalization error G (log10)</text>\n";

  // x ticks at the sample sizes, y ticks at integer exponents
  for (const auto& r : rows) {
    const double x = px(std::log10(static_cast<double>(r.t_len)));
    s += "<line x1=\"" + num(x) + "\" y1=\"" + num(height - mb) + "\" x2=\"" +
         num(x) + "\" y2=\"" + num(height - mb + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(x) + "\" y=\"" + num(height - mb + 20) +
         "\" text-anchor=\"middle\" font-size=\"12\">" +
         std::to_string(r.t_len) + "</text>\n";
  }
  for (int e = static_cast<int>(std::floor(ymin));
       e <= static_cast<int>(std::ceil(ymax)); ++e) {
    if (e < ymin || e > ymax) continue;
    const double y = py(e);
    s += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(y) + "\" x2=\"" +
         num(ml) + "\" y2=\"" + num(y) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(ml - 10) + "\" y=\"" + num(y + 4) +
         "\" text-anchor=\"end\" font-size=\"12\">1e" + std::to_string(e) +
         "</text>\n";
  }

  // error bars, connecting line, points
  std::string poly;
  for (const auto& r : rows) {
    if (r.mean_g <= 0.0) continue;
    const double x = px(std::log10(static_cast<double>(r.t_len)));
    const double ylo =
        py(std::log10(std::max(r.mean_g - r.stderr_g, r.mean_g * 1e-3)));
    const double yhi = py(std::log10(r.mean_g + r.stderr_g));
    const double y = py(std::log10(r.mean_g));
    s += "<line x1=\"" + num(x) + "\" y1=\"" + num(ylo) + "\" x2=\"" + num(x) +
         "\" y2=\"" + num(yhi) + "\" stroke=\"steelblue\"/>\n";
    s += "<line x1=\"" + num(x - 4) + "\" y1=\"" + num(ylo) + "\" x2=\"" +
         num(x + 4) + "\" y2=\"" + num(ylo) + "\" stroke=\"steelblue\"/>\n";
    s += "<line x1=\"" + num(x - 4) + "\" y1=\"" + num(yhi) + "\" x2=\"" +
         num(x + 4) + "\" y2=\"" + num(yhi) + "\" stroke=\"steelblue\"/>\n";
    poly += num(x) + "," + num(y) + " ";
  }
  s += "<polyline points=\"" + poly +
       "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n";
  for (const auto& r : rows) {
    if (r.mean_g <= 0.0) continue;
    const double x = px(std::log10(static_cast<double>(r.t_len)));
    const double y = py(std::log10(r.mean_g));
    s += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) +
         "\" r=\"3.5\" fill=\"steelblue\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

} // namespace

void emit_artifacts(const SweepResult& result,
                    const std::filesystem::path& out_dir) {
  if (result.cells.empty()) {
    throw ConfigError("cannot emit artifacts for an empty sweep result");
  }
  std::filesystem::create_directories(out_dir);

  std::vector<const CellResult*> done;
  std::vector<const CellResult*> failed;
  for (const auto& c : result.cells) {
    (c.ok ? done : failed).push_back(&c);
  }
  std::sort(done.begin(), done.end(),
            [](const CellResult* a, const CellResult* b) {
              return std::tie(a->t_len, a->b) < std::tie(b->t_len, b->b);
            });

  std::string csv = "b,T,g,stop_epoch,seconds\n";
  for (const auto* c : done) {
    csv += std::to_string(c->b) + ',' + std::to_string(c->t_len) + ',' +
           io::format_double(c->g) + ',' + std::to_string(c->stop_epoch) +
           ',' + io::format_double(c->seconds) + '\n';
  }
  io::atomic_write(out_dir / "results.csv", csv);

  std::string sum = "T,G,std,stderr,n\n";
  const auto rows = result.summary();
  for (const auto& r : rows) {
    sum += std::to_string(r.t_len) + ',' + io::format_double(r.mean_g) + ',' +
           io::format_double(r.std_g) + ',' + io::format_double(r.stderr_g) +
           ',' + std::to_string(r.n) + '\n';
  }
  io::atomic_write(out_dir / "summary.csv", sum);

  if (!rows.empty()) {
    io::atomic_write(out_dir / "loglog.svg", svg_loglog(rows));
  }

  if (!failed.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto* c : failed) {
      j.push_back({{"b", c->b}, {"T", c->t_len}, {"error", c->error}});
    }
    io::atomic_write(out_dir / "failures.json", j.dump(2) + "\n");
  }
}

} // namespace nfar
