#pragma once

// Small dense networks with hand-written backpropagation, a replay buffer and
// the DQN / gradient-target-tracking training loops.

#include "gtt/envs.hpp"
#include "gtt/record.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace gtt {

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out (empty when the net has no biases)
};

class Mlp;

/// Same shapes as the network's parameters.
struct MlpGradient {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static MlpGradient zeros_like(const Mlp& net);
  Vector flat() const;
  MlpGradient& operator+=(const MlpGradient& other);
  MlpGradient& operator*=(double c);
};

/// ReLU hidden layers, identity output. Observations are column vectors;
/// batches are matrices with one column per sample.
class Mlp {
 public:
  /// Zero-initialized network; `sizes` = {input, hidden..., output}.
  explicit Mlp(std::vector<int> sizes, bool use_bias = true);
  /// He-uniform weights, zero biases.
  static Mlp random(std::vector<int> sizes, Rng& rng, bool use_bias = true);

  const std::vector<int>& sizes() const { return sizes_; }
  bool use_bias() const { return use_bias_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Matrix forward(const Matrix& obs) const;
  Vector forward(const Vector& obs) const;
  /// Gradient of sum_ij output_grad(i,j) * output(i,j) w.r.t. every parameter.
  MlpGradient backward(const Matrix& obs, const Matrix& output_grad) const;

  long n_params() const;
  /// Weights (row-major) then bias, layer by layer.
  Vector flat() const;
  void set_flat(const Vector& params);
  /// theta += scale * g
  void add_scaled(const MlpGradient& g, double scale);
  bool finite() const;

  bool operator==(const Mlp& other) const;

 private:
  std::vector<int> sizes_;
  bool use_bias_;
  std::vector<DenseLayer> layers_;
};

/// Checkpoint byte layout (all little-endian):
///   u32 n = number of layer sizes, then n x u32 sizes, u32 has_bias,
///   then per layer: weight as f64 row-major (out x in), bias as f64 (out)
///   if has_bias.
void save_checkpoint(std::ostream& out, const Mlp& net);
Mlp load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Mlp& net);
Mlp load_checkpoint(const std::string& path);

struct Batch {
  Matrix obs;       // obs_dim x B
  std::vector<int> actions;
  Vector rewards;
  Matrix next_obs;  // obs_dim x B
  std::vector<char> done;  // 1 when next_obs is terminal

  int size() const { return static_cast<int>(actions.size()); }
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int obs_dim);

  void push(const Vector& obs, int action, double reward, const Vector& next_obs,
            bool done);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  /// Uniform sample without replacement; needs size() >= batch_size.
  Batch sample(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t capacity_;
  int obs_dim_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  Matrix obs_;
  Matrix next_obs_;
  std::vector<int> actions_;
  Vector rewards_;
  std::vector<char> done_;
};

struct LossGrad {
  double loss = 0.0;
  MlpGradient grad;
};

struct PairLossGrad {
  double loss1 = 0.0;
  double loss2 = 0.0;
  MlpGradient grad1;  // w.r.t. the online parameters
  MlpGradient grad2;  // w.r.t. the target parameters
};

/// L = 1/(2|B|) sum (y - Q(s,a))^2 with y = r + 1(s') gamma max Q_target(s',.).
double dqn_loss(const Mlp& online, const Mlp& target, const Batch& batch, double gamma);
LossGrad dqn_loss_grad(const Mlp& online, const Mlp& target, const Batch& batch,
                       double gamma);

/// L1 as in the DQN loss with the target network bootstrapping;
/// L2 = (beta/2)(1/|B|) sum (Q1(s,a) - Q2(s,a))^2, Q1 held constant.
PairLossGrad agt2_loss_grad(const Mlp& online, const Mlp& target, const Batch& batch,
                            double beta, double gamma);
/// Per sample 1/2 [(y1 - Q1)^2 + beta (Q2 - Q1)^2] for L1 with
/// y1 = r + 1(s') gamma max Q2(s',.), and the mirror image for L2. Each
/// gradient is taken w.r.t. its own network only.
PairLossGrad sgt2_loss_grad(const Mlp& online, const Mlp& target, const Batch& batch,
                            double beta, double gamma);

struct NetPair {
  Mlp online;
  Mlp target;
};

/// Plain gradient steps from the pre-update parameters; return the losses.
PairLossGrad agt2_dqn_step(NetPair& nets, const Batch& batch, double alpha,
                           double beta, double gamma);
PairLossGrad sgt2_dqn_step(NetPair& nets, const Batch& batch, double alpha,
                           double beta, double gamma);

/// SGD with optional heavy-ball momentum: v = mu v + g; theta -= lr v.
class SgdOptimizer {
 public:
  SgdOptimizer(const Mlp& net, double lr, double momentum = 0.0);
  void step(Mlp& net, const MlpGradient& grad);

 private:
  double lr_;
  double momentum_;
  MlpGradient velocity_;
};

enum class DeepAlgorithm { dqn, agt2_dqn, sgt2_dqn };

DeepAlgorithm parse_deep_algorithm(std::string_view name);
std::string_view to_string(DeepAlgorithm algo);

struct DeepConfig {
  std::vector<int> hidden = {64, 64};
  int update_period = 100;   // C, DQN hard copies every C gradient steps
  double polyak_tau = 0.0;   // > 0 replaces hard copies by soft updates
  double beta = 1.0;
  double alpha = 1e-3;
  double momentum = 0.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  long epsilon_decay_steps = 5000;
  int batch_size = 64;
  std::size_t buffer_capacity = 10000;
  double gamma = 0.99;
  long episodes = 1000;      // stop after this many episodes
  long max_env_steps = 0;    // and/or this many env steps (0 = no cap)
  std::uint64_t seed = 0;
  /// Draw the target network independently instead of copying the online one.
  bool independent_target_init = false;

  void validate() const;
  double epsilon_at(long step) const;
};

struct DeepRun {
  ExperimentRecord record;  // metric "return", index = episode
  NetPair nets;
  long env_steps = 0;
  long gradient_steps = 0;
};

/// Full loop: epsilon-greedy on the online net, store, sample once the
/// buffer holds a batch, one gradient step per env step.
DeepRun train(DeepAlgorithm algo, VectorEnv& env, const DeepConfig& cfg);

}  // namespace gtt
