#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqmp/datagen.hpp"
#include "dqmp/kvfd.hpp"
#include "dqmp/params.hpp"

namespace dqmp::nnet {

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

/// Named weights. Serialized as "DQMPNN1\0", u32 version = 1, u32 count, then
/// per tensor: u16 name length, name bytes, u8 rank, u32 dims, float32 values
/// (all little-endian). In memory values are double.
using TensorStore = std::map<std::string, Tensor>;

void write_tensors(const std::string& path, const TensorStore& store);
TensorStore read_tensors(const std::string& path);
/// Rounds every value to float32, as a save/load cycle would.
void round_to_float(TensorStore& store);

/// Stacked LSTM over a sequence of `input_len` steps of `input_width`
/// features, rectifier on each layer's output sequence, fully connected layer
/// on the last step's output, sigmoid. With no LSTM layers the fully connected
/// layer sees the whole flattened sequence.
struct NetworkSpec {
  std::size_t input_len = 250;
  std::size_t input_width = 1;
  std::vector<std::size_t> lstm_layers{64, 64, 64};
  std::size_t fc_out = 8;

  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

NetworkSpec drn_spec(std::size_t m, std::size_t k = kParamCount);
NetworkSpec din_spec(std::size_t m, std::size_t k = kParamCount);

/// Tensors: "lstm<l>.W" [4H, D + H] (gate rows i, f, g, o; input columns
/// first), "lstm<l>.b" [4H], "fc.W" [out, in], "fc.b" [out], and
/// "meta.input_len" [1].
struct Network {
  NetworkSpec spec;
  TensorStore weights;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases except +1 on the
/// forget gate.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);
/// Rebuilds the spec from tensor shapes; throws FormatError on inconsistent sets.
Network network_from_tensors(TensorStore store);
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

/// Columns of `inputs` are sequences (input_len * input_width rows, step-major).
/// Returns fc_out x batch sigmoid outputs.
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs);
std::vector<double> forward(const Network& net, std::span<const double> seq);

// ---- losses ----

/// Sum of |pred - target|.
double loss_reward(std::span<const double> pred, std::span<const double> target);

struct LossWeights {
  double theta = 1.0;  // weight of the parameter term
  double curve = 1.0;  // weight of the curve term
  std::array<double, kParamCount> per_param{0.09, 0.9, 0.01};
};

/// theta_w * sum_i w_i |hat_i - true_i| / true_i + curve_w * mean|curve_hat - curve_true| / max(curve_true).
double loss_initial(const kvfd::ParameterVector& theta_true, const kvfd::ParameterVector& theta_hat,
                    std::span<const double> curve_true, std::span<const double> curve_hat, const LossWeights& w);

enum class LossKind { Reward, Initial };

/// Everything a loss needs besides the network output and the target. The
/// Initial loss maps outputs and targets through the box and synthesizes both
/// curves on time_grid(proto, m).
struct LossSpec {
  LossKind kind = LossKind::Reward;
  LossWeights weights;
  ParameterBox box;
  kvfd::ProtocolConfig proto = kvfd::preset(kvfd::Protocol::RampRelaxation);
  std::size_t curve_points = 250;  // m for the Initial loss curves
  double fd_step = 1e-4;           // normalized-coordinate step for the curve-term gradient
};

/// Mean loss over the batch columns; if grad is non-null it receives
/// d(mean loss)/d(output), same shape as outputs.
double batch_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets, const LossSpec& loss,
                  Eigen::MatrixXd* grad);

/// Gradient of the mean batch loss with respect to every tensor (same keys
/// and shapes as net.weights). Returns the loss.
double loss_gradient(const Network& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                     const LossSpec& loss, TensorStore& grad);

/// Max relative deviation |a - n| / max(|a|, |n|, 1e-6) between the analytic
/// gradient and central differences with step epsilon, over all weights.
double grad_check(const Network& net, std::span<const double> input, std::span<const double> target,
                  const LossSpec& loss, double epsilon);

// ---- training ----

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t early_stop_patience = 0;  // epochs without validation gain; 0 disables
  double clip_norm = 0.0;               // global gradient norm clip; 0 disables
  unsigned threads = 1;  // >1 splits each minibatch; results then depend on the thread count
  LossSpec loss;

  void validate() const;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Network net;  // weights with the lowest validation loss
  std::vector<EpochLoss> history;  // row 0 is the untrained network
  std::size_t best_epoch = 0;
};

/// Minibatch training; deterministic given cfg.seed. Row 0 of the history
/// holds the losses of the initial weights. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(const Network& init, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);
/// Mean loss over a dataset.
double evaluate_loss(const Network& net, const Dataset& ds, const LossSpec& loss, std::size_t batch_size = 256);

void write_loss_history(const std::string& path, const std::vector<EpochLoss>& history);

/// The given records as columns of network inputs / targets.
Eigen::MatrixXd batch_inputs(const Dataset& ds, std::span<const std::size_t> rows);
Eigen::MatrixXd batch_targets(const Dataset& ds, std::span<const std::size_t> rows);

// ---- inference helpers ----

/// Forward pass on the min-max normalized curve, denormalized through the box.
kvfd::ParameterVector din_init(std::span<const double> curve_values, const Network& din, const ParameterBox& box);
/// Predicted global reward per action for a scaled residual (Y_exp - Y_hat) / max|Y_exp|.
std::vector<double> drn_predict(std::span<const double> residual, const Network& drn);

}  // namespace dqmp::nnet
