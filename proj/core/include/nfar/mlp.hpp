#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nfar/rng.hpp"

namespace nfar {

/// Dense ReLU network shape. The default is the experiment architecture:
/// 5 inputs, five hidden layers of width 32, scalar output (six affine
/// maps in total).
struct MlpArchitecture {
  int input_dim = 5;
  std::vector<int> hidden = {32, 32, 32, 32, 32};
  int output_dim = 1;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  /// (fan_in, fan_out) per affine layer.
  std::vector<std::pair<int, int>> layer_shapes() const;
  std::int64_t param_count() const;

  bool operator==(const MlpArchitecture&) const = default;
};

/// Weights W_l (fan_out x fan_in) and biases b_l per affine layer.
struct MlpParams {
  MlpArchitecture arch;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Biases zero; each weight entry i.i.d. uniform on
/// +-sqrt(6 / (fan_in + fan_out)).
MlpParams glorot_init(const MlpArchitecture& arch, rng::Stream& stream);

MlpParams zero_params(const MlpArchitecture& arch);

/// Same shapes as MlpParams; accumulated by backward passes.
struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void set_zero();
};

MlpGradients zero_gradients(const MlpArchitecture& arch);

/// Batched forward pass: X is N x input_dim, returns N outputs
/// (output_dim fixed to 1). Throws NumericError on non-finite output.
Eigen::VectorXd forward(const MlpParams& p, const Eigen::MatrixXd& X);

/// Gradient of the mean squared error (1/N) sum (f(x_n) - y_n)^2 with
/// respect to every weight and bias. ReLU subgradient at 0 is 0.
MlpGradients backward(const MlpParams& p, const Eigen::MatrixXd& X,
                      const Eigen::VectorXd& targets);

/// Reusable activation buffers for repeated batched passes; avoids
/// reallocating in training inner loops. A forward() fills the caches the
/// matching backward() consumes.
class MlpWorkspace {
public:
  /// Returns the N-vector of outputs and caches layer activations.
  const Eigen::VectorXd& forward(const MlpParams& p, const Eigen::MatrixXd& X);

  /// Backpropagates d(loss)/d(output) for each row of the last forward()
  /// batch, accumulating into grads (+=).
  void backward(const MlpParams& p, const Eigen::VectorXd& output_grad,
                MlpGradients& grads);

private:
  std::vector<Eigen::MatrixXd> acts_;  // post-activation output per layer
  std::vector<Eigen::MatrixXd> delta_; // scratch
  Eigen::VectorXd out_;
  const Eigen::MatrixXd* x_ = nullptr; // batch of the last forward()
};

/// Adam optimizer state; moments share the parameter shapes.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
};

AdamState make_adam_state(const MlpArchitecture& arch, double lr = 1e-3);

/// One Adam update with bias correction:
/// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, MlpParams& params, const MlpGradients& g);

/// JSON checkpoint: {arch, weights (nested arrays, row-major), biases,
/// adam_state?, seed, epoch}.
struct Checkpoint {
  MlpParams params;
  std::optional<AdamState> adam;
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace nfar
