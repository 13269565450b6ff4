#include "nfar/mlp.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nfar/errors.hpp"
#include "nfar/grid.hpp"

namespace nfar {

std::vector<std::pair<int, int>> MlpArchitecture::layer_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  int prev = input_dim;
  for (int w : hidden) {
    shapes.emplace_back(prev, w);
    prev = w;
  }
  shapes.emplace_back(prev, output_dim);
  return shapes;
}

std::int64_t MlpArchitecture::param_count() const {
  std::int64_t count = 0;
  for (const auto& [fan_in, fan_out] : layer_shapes()) {
    count += static_cast<std::int64_t>(fan_in) * fan_out + fan_out;
  }
  return count;
}

namespace {

void validate(const MlpArchitecture& arch) {
  if (arch.input_dim < 1 || arch.output_dim < 1) {
    throw ConfigError("network input/output dimensions must be positive");
  }
  for (int w : arch.hidden) {
    if (w < 1) {
      throw ConfigError("network hidden widths must be positive");
    }
  }
}

} // namespace

MlpParams glorot_init(const MlpArchitecture& arch, rng::Stream& stream) {
  validate(arch);
  MlpParams p;
  p.arch = arch;
  for (const auto& [fan_in, fan_out] : arch.layer_shapes()) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    // Row-major fill order so the draw sequence matches the checkpoint
    // layout.
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        w(r, c) = stream.uniform(-bound, bound);
      }
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

MlpParams zero_params(const MlpArchitecture& arch) {
  validate(arch);
  MlpParams p;
  p.arch = arch;
  for (const auto& [fan_in, fan_out] : arch.layer_shapes()) {
    p.weights.push_back(Eigen::MatrixXd::Zero(fan_out, fan_in));
    p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

void MlpGradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

MlpGradients zero_gradients(const MlpArchitecture& arch) {
  MlpGradients g;
  for (const auto& [fan_in, fan_out] : arch.layer_shapes()) {
    g.weights.push_back(Eigen::MatrixXd::Zero(fan_out, fan_in));
    g.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return g;
}

const Eigen::VectorXd& MlpWorkspace::forward(const MlpParams& p,
                                             const Eigen::MatrixXd& X) {
  const int layers = p.arch.layer_count();
  if (X.cols() != p.arch.input_dim) {
    throw ShapeError("batch has " + std::to_string(X.cols()) +
                     " columns, network expects " +
                     std::to_string(p.arch.input_dim));
  }
  if (p.arch.output_dim != 1) {
    throw ShapeError("batched forward supports scalar outputs only");
  }
  acts_.resize(static_cast<std::size_t>(layers));
  // acts_[l] holds the post-activation output of affine layer l (ReLU on
  // hidden layers, identity on the last).
  const Eigen::MatrixXd* prev = &X;
  for (int l = 0; l < layers; ++l) {
    auto& a = acts_[static_cast<std::size_t>(l)];
    a.noalias() = *prev * p.weights[static_cast<std::size_t>(l)].transpose();
    a.rowwise() += p.biases[static_cast<std::size_t>(l)].transpose();
    if (l + 1 < layers) {
      a = a.cwiseMax(0.0);
    }
    prev = &a;
  }
  out_ = acts_.back().col(0);
  if (!out_.allFinite()) {
    throw NumericError("network forward pass produced non-finite output");
  }
  x_ = &X;
  return out_;
}

void MlpWorkspace::backward(const MlpParams& p,
                            const Eigen::VectorXd& output_grad,
                            MlpGradients& grads) {
  const int layers = p.arch.layer_count();
  if (acts_.empty() || x_ == nullptr) {
    throw Error("backward called before forward");
  }
  delta_.resize(static_cast<std::size_t>(layers));
  auto& dlast = delta_[static_cast<std::size_t>(layers - 1)];
  dlast = output_grad;

  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input =
        l == 0 ? *x_ : acts_[static_cast<std::size_t>(l - 1)];
    const auto& d = delta_[static_cast<std::size_t>(l)];
    grads.weights[static_cast<std::size_t>(l)].noalias() +=
        d.transpose() * input;
    grads.biases[static_cast<std::size_t>(l)].noalias() +=
        d.colwise().sum().transpose();
    if (l > 0) {
      auto& dprev = delta_[static_cast<std::size_t>(l - 1)];
      dprev.noalias() = d * p.weights[static_cast<std::size_t>(l)];
      // ReLU mask: the stored activation is already max(pre, 0), so a
      // positive activation marks a pass-through unit (derivative at
      // exactly 0 is 0).
      const auto& a = acts_[static_cast<std::size_t>(l - 1)];
      dprev.array() *= (a.array() > 0.0).cast<double>();
    }
  }
}

Eigen::VectorXd forward(const MlpParams& p, const Eigen::MatrixXd& X) {
  MlpWorkspace ws;
  return ws.forward(p, X);
}

MlpGradients backward(const MlpParams& p, const Eigen::MatrixXd& X,
                      const Eigen::VectorXd& targets) {
  if (targets.size() != X.rows()) {
    throw ShapeError("target count does not match batch rows");
  }
  MlpWorkspace ws;
  const Eigen::VectorXd& out = ws.forward(p, X);
  const double n = static_cast<double>(X.rows());
  const Eigen::VectorXd output_grad = 2.0 / n * (out - targets);
  MlpGradients grads = zero_gradients(p.arch);
  ws.backward(p, output_grad, grads);
  return grads;
}

AdamState make_adam_state(const MlpArchitecture& arch, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& [fan_in, fan_out] : arch.layer_shapes()) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(fan_out, fan_in));
    s.v_w.push_back(Eigen::MatrixXd::Zero(fan_out, fan_in));
    s.m_b.push_back(Eigen::VectorXd::Zero(fan_out));
    s.v_b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return s;
}

void adam_step(AdamState& state, MlpParams& params, const MlpGradients& g) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const auto update = [&](auto& theta, auto& m, auto& v, const auto& grad) {
    m = state.beta1 * m + (1.0 - state.beta1) * grad;
    v = state.beta2 * v.array() +
        (1.0 - state.beta2) * grad.array().square();
    theta.array() -=
        state.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], state.m_w[l], state.v_w[l], g.weights[l]);
    update(params.biases[l], state.m_b[l], state.v_b[l], g.biases[l]);
  }
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j[r][c].get<double>();
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    arr.push_back(v(i));
  }
  return arr;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json j;
  j["arch"] = {{"input_dim", ck.params.arch.input_dim},
               {"hidden", ck.params.arch.hidden},
               {"output_dim", ck.params.arch.output_dim}};
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < ck.params.weights.size(); ++l) {
    j["weights"].push_back(matrix_to_json(ck.params.weights[l]));
    j["biases"].push_back(vector_to_json(ck.params.biases[l]));
  }
  if (ck.adam) {
    nlohmann::json a;
    a["lr"] = ck.adam->lr;
    a["beta1"] = ck.adam->beta1;
    a["beta2"] = ck.adam->beta2;
    a["eps"] = ck.adam->eps;
    a["t"] = ck.adam->t;
    a["m_w"] = nlohmann::json::array();
    a["v_w"] = nlohmann::json::array();
    a["m_b"] = nlohmann::json::array();
    a["v_b"] = nlohmann::json::array();
    for (std::size_t l = 0; l < ck.adam->m_w.size(); ++l) {
      a["m_w"].push_back(matrix_to_json(ck.adam->m_w[l]));
      a["v_w"].push_back(matrix_to_json(ck.adam->v_w[l]));
      a["m_b"].push_back(vector_to_json(ck.adam->m_b[l]));
      a["v_b"].push_back(vector_to_json(ck.adam->v_b[l]));
    }
    j["adam_state"] = std::move(a);
  }
  j["seed"] = ck.seed;
  j["epoch"] = ck.epoch;
  io::atomic_write(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  const auto j = nlohmann::json::parse(in);
  Checkpoint ck;
  ck.params.arch.input_dim = j.at("arch").at("input_dim").get<int>();
  ck.params.arch.hidden = j.at("arch").at("hidden").get<std::vector<int>>();
  ck.params.arch.output_dim = j.at("arch").at("output_dim").get<int>();
  for (const auto& w : j.at("weights")) {
    ck.params.weights.push_back(matrix_from_json(w));
  }
  for (const auto& b : j.at("biases")) {
    ck.params.biases.push_back(vector_from_json(b));
  }
  if (j.contains("adam_state")) {
    const auto& a = j["adam_state"];
    AdamState s;
    s.lr = a.at("lr").get<double>();
    s.beta1 = a.at("beta1").get<double>();
    s.beta2 = a.at("beta2").get<double>();
    s.eps = a.at("eps").get<double>();
    s.t = a.at("t").get<std::int64_t>();
    for (const auto& m : a.at("m_w")) s.m_w.push_back(matrix_from_json(m));
    for (const auto& m : a.at("v_w")) s.v_w.push_back(matrix_from_json(m));
    for (const auto& m : a.at("m_b")) s.m_b.push_back(vector_from_json(m));
    for (const auto& m : a.at("v_b")) s.v_b.push_back(vector_from_json(m));
    ck.adam = std::move(s);
  }
  ck.seed = j.value("seed", std::uint64_t{0});
  ck.epoch = j.value("epoch", 0);
  return ck;
}

} // namespace nfar
