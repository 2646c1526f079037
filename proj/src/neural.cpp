#include "gtt/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace gtt {

MlpGradient MlpGradient::zeros_like(const Mlp& net) {
  MlpGradient g;
  for (const auto& l : net.layers()) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

Vector MlpGradient::flat() const {
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) n += weight[i].size() + bias[i].size();
  Vector out(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    for (Eigen::Index r = 0; r < weight[i].rows(); ++r)
      for (Eigen::Index c = 0; c < weight[i].cols(); ++c) out[k++] = weight[i](r, c);
    for (Eigen::Index r = 0; r < bias[i].size(); ++r) out[k++] = bias[i][r];
  }
  return out;
}

MlpGradient& MlpGradient::operator+=(const MlpGradient& other) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

MlpGradient& MlpGradient::operator*=(double c) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] *= c;
    bias[i] *= c;
  }
  return *this;
}

Mlp::Mlp(std::vector<int> sizes, bool use_bias)
    : sizes_(std::move(sizes)), use_bias_(use_bias) {
  if (sizes_.size() < 2) throw DimensionError("network needs at least input and output sizes");
  for (int s : sizes_)
    if (s < 1) throw DimensionError("layer sizes must be positive");
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i)
    layers_.push_back({Matrix::Zero(sizes_[i + 1], sizes_[i]),
                       use_bias_ ? Vector::Zero(sizes_[i + 1]) : Vector()});
}

Mlp Mlp::random(std::vector<int> sizes, Rng& rng, bool use_bias) {
  Mlp net(std::move(sizes), use_bias);
  for (auto& l : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.cols()));
    std::uniform_real_distribution<double> unif(-limit, limit);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = unif(rng);
  }
  return net;
}

Matrix Mlp::forward(const Matrix& obs) const {
  if (obs.rows() != input_dim())
    throw DimensionError("network input has " + std::to_string(obs.rows()) +
                         " rows, expected " + std::to_string(input_dim()));
  Matrix a = obs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].weight * a;
    if (use_bias_) z.colwise() += layers_[i].bias;
    a = (i + 1 < layers_.size()) ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return a;
}

Vector Mlp::forward(const Vector& obs) const {
  return forward(Matrix(obs)).col(0);
}

MlpGradient Mlp::backward(const Matrix& obs, const Matrix& output_grad) const {
  if (obs.rows() != input_dim()) throw DimensionError("network input has wrong size");
  if (output_grad.rows() != output_dim() || output_grad.cols() != obs.cols())
    throw DimensionError("output gradient has wrong shape");
  const std::size_t L = layers_.size();
  // acts[i] is the input of layer i; pre[i] its pre-activation.
  std::vector<Matrix> acts(L), pre(L);
  acts[0] = obs;
  for (std::size_t i = 0; i < L; ++i) {
    pre[i] = layers_[i].weight * acts[i];
    if (use_bias_) pre[i].colwise() += layers_[i].bias;
    if (i + 1 < L) acts[i + 1] = pre[i].cwiseMax(0.0);
  }
  MlpGradient g = MlpGradient::zeros_like(*this);
  Matrix delta = output_grad;
  for (std::size_t i = L; i-- > 0;) {
    g.weight[i] = delta * acts[i].transpose();
    if (use_bias_) g.bias[i] = delta.rowwise().sum();
    if (i > 0) {
      delta = (layers_[i].weight.transpose() * delta)
                  .cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

long Mlp::n_params() const {
  long n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Vector Mlp::flat() const {
  Vector out(n_params());
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out[k++] = l.weight(r, c);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out[k++] = l.bias[r];
  }
  return out;
}

void Mlp::set_flat(const Vector& params) {
  if (params.size() != n_params()) throw DimensionError("parameter vector has wrong length");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = params[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = params[k++];
  }
}

void Mlp::add_scaled(const MlpGradient& g, double scale) {
  if (g.weight.size() != layers_.size()) throw DimensionError("gradient does not match network");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight += scale * g.weight[i];
    if (use_bias_) layers_[i].bias += scale * g.bias[i];
  }
}

bool Mlp::finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

bool Mlp::operator==(const Mlp& other) const {
  if (sizes_ != other.sizes_ || use_bias_ != other.use_bias_) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].weight != other.layers_[i].weight ||
        layers_[i].bias != other.layers_[i].bias)
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void save_checkpoint(std::ostream& out, const Mlp& net) {
  put_u32(out, static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) put_u32(out, static_cast<std::uint32_t>(s));
  put_u32(out, net.use_bias() ? 1u : 0u);
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f64(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f64(out, l.bias[r]);
  }
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

Mlp load_checkpoint(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  if (n < 2 || n > 1024) throw std::runtime_error("checkpoint: implausible layer count");
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    const std::uint32_t v = get_u32(in);
    if (v == 0 || v > (1u << 24)) throw std::runtime_error("checkpoint: implausible layer size");
    s = static_cast<int>(v);
  }
  const std::uint32_t has_bias = get_u32(in);
  if (has_bias > 1) throw std::runtime_error("checkpoint: bad bias flag");
  Mlp net(sizes, has_bias == 1);
  for (auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = get_f64(in);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = get_f64(in);
  }
  return net;
}

void save_checkpoint(const std::string& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_checkpoint(out, net);
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, int obs_dim)
    : capacity_(capacity),
      obs_dim_(obs_dim),
      obs_(obs_dim, static_cast<Eigen::Index>(capacity)),
      next_obs_(obs_dim, static_cast<Eigen::Index>(capacity)),
      actions_(capacity),
      rewards_(static_cast<Eigen::Index>(capacity)),
      done_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be >= 1");
  if (obs_dim < 1) throw DimensionError("observation dimension must be >= 1");
}

void ReplayBuffer::push(const Vector& obs, int action, double reward,
                        const Vector& next_obs, bool done) {
  if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_)
    throw DimensionError("observation has wrong size for the replay buffer");
  const auto i = static_cast<Eigen::Index>(head_);
  obs_.col(i) = obs;
  next_obs_.col(i) = next_obs;
  actions_[head_] = action;
  rewards_[i] = reward;
  done_[head_] = done ? 1 : 0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (size_ < batch_size)
    throw std::logic_error("replay buffer holds " + std::to_string(size_) +
                           " transitions, fewer than the batch size " +
                           std::to_string(batch_size));
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx;
  idx.reserve(batch_size);
  while (idx.size() < batch_size) {
    const std::size_t j = pick(rng);
    if (std::find(idx.begin(), idx.end(), j) == idx.end()) idx.push_back(j);
  }
  const auto B = static_cast<Eigen::Index>(batch_size);
  Batch b;
  b.obs.resize(obs_dim_, B);
  b.next_obs.resize(obs_dim_, B);
  b.rewards.resize(B);
  b.actions.resize(batch_size);
  b.done.resize(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const auto src = static_cast<Eigen::Index>(idx[k]);
    const auto dst = static_cast<Eigen::Index>(k);
    b.obs.col(dst) = obs_.col(src);
    b.next_obs.col(dst) = next_obs_.col(src);
    b.rewards[dst] = rewards_[src];
    b.actions[k] = actions_[idx[k]];
    b.done[k] = done_[idx[k]];
  }
  return b;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

void check_batch(const Batch& b, const Mlp& net) {
  const auto B = b.size();
  if (B == 0) throw std::invalid_argument("empty batch");
  if (b.obs.cols() != B || b.next_obs.cols() != B || b.rewards.size() != B ||
      static_cast<int>(b.done.size()) != B)
    throw DimensionError("batch fields have inconsistent lengths");
  for (int a : b.actions)
    if (a < 0 || a >= net.output_dim()) throw DimensionError("batch action out of range");
}

// y_i = r_i + 1(s'_i) gamma max_a Q_boot(s'_i, a)
Vector bootstrap_targets(const Mlp& boot, const Batch& b, double gamma) {
  const Matrix qn = boot.forward(b.next_obs);
  Vector y(b.size());
  for (int i = 0; i < b.size(); ++i)
    y[i] = b.rewards[i] + (b.done[i] ? 0.0 : gamma * qn.col(i).maxCoeff());
  return y;
}

Vector taken(const Matrix& q, const Batch& b) {
  Vector v(b.size());
  for (int i = 0; i < b.size(); ++i) v[i] = q(b.actions[i], i);
  return v;
}

// Output gradient that is nonzero only at the taken actions.
Matrix scatter(const Vector& per_sample, const Batch& b, int n_actions) {
  Matrix g = Matrix::Zero(n_actions, b.size());
  for (int i = 0; i < b.size(); ++i) g(b.actions[i], i) = per_sample[i];
  return g;
}

}  // namespace

double dqn_loss(const Mlp& online, const Mlp& target, const Batch& batch, double gamma) {
  check_batch(batch, online);
  const Vector y = bootstrap_targets(target, batch, gamma);
  const Vector q = taken(online.forward(batch.obs), batch);
  return 0.5 * (y - q).squaredNorm() / batch.size();
}

LossGrad dqn_loss_grad(const Mlp& online, const Mlp& target, const Batch& batch,
                       double gamma) {
  check_batch(batch, online);
  const double B = batch.size();
  const Vector y = bootstrap_targets(target, batch, gamma);
  const Vector q = taken(online.forward(batch.obs), batch);
  const Vector resid = q - y;
  return {0.5 * resid.squaredNorm() / B,
          online.backward(batch.obs, scatter(resid / B, batch, online.output_dim()))};
}

PairLossGrad agt2_loss_grad(const Mlp& online, const Mlp& target, const Batch& batch,
                            double beta, double gamma) {
  check_batch(batch, online);
  check_batch(batch, target);
  const double B = batch.size();
  const Vector y = bootstrap_targets(target, batch, gamma);
  const Vector q1 = taken(online.forward(batch.obs), batch);
  const Vector q2 = taken(target.forward(batch.obs), batch);
  const Vector r1 = q1 - y;
  const Vector gap = q2 - q1;
  PairLossGrad out;
  out.loss1 = 0.5 * r1.squaredNorm() / B;
  out.loss2 = 0.5 * beta * gap.squaredNorm() / B;
  out.grad1 = online.backward(batch.obs, scatter(r1 / B, batch, online.output_dim()));
  out.grad2 = target.backward(batch.obs, scatter(beta * gap / B, batch, target.output_dim()));
  return out;
}

PairLossGrad sgt2_loss_grad(const Mlp& online, const Mlp& target, const Batch& batch,
                            double beta, double gamma) {
  check_batch(batch, online);
  check_batch(batch, target);
  const double B = batch.size();
  const Vector y1 = bootstrap_targets(target, batch, gamma);
  const Vector y2 = bootstrap_targets(online, batch, gamma);
  const Vector q1 = taken(online.forward(batch.obs), batch);
  const Vector q2 = taken(target.forward(batch.obs), batch);
  const Vector r1 = q1 - y1, r2 = q2 - y2, gap = q1 - q2;
  PairLossGrad out;
  out.loss1 = 0.5 * (r1.squaredNorm() + beta * gap.squaredNorm()) / B;
  out.loss2 = 0.5 * (r2.squaredNorm() + beta * gap.squaredNorm()) / B;
  out.grad1 = online.backward(batch.obs,
                              scatter((r1 + beta * gap) / B, batch, online.output_dim()));
  out.grad2 = target.backward(batch.obs,
                              scatter((r2 - beta * gap) / B, batch, target.output_dim()));
  return out;
}

PairLossGrad agt2_dqn_step(NetPair& nets, const Batch& batch, double alpha,
                           double beta, double gamma) {
  PairLossGrad lg = agt2_loss_grad(nets.online, nets.target, batch, beta, gamma);
  nets.online.add_scaled(lg.grad1, -alpha);
  nets.target.add_scaled(lg.grad2, -alpha);
  return lg;
}

PairLossGrad sgt2_dqn_step(NetPair& nets, const Batch& batch, double alpha,
                           double beta, double gamma) {
  PairLossGrad lg = sgt2_loss_grad(nets.online, nets.target, batch, beta, gamma);
  nets.online.add_scaled(lg.grad1, -alpha);
  nets.target.add_scaled(lg.grad2, -alpha);
  return lg;
}

SgdOptimizer::SgdOptimizer(const Mlp& net, double lr, double momentum)
    : lr_(lr), momentum_(momentum), velocity_(MlpGradient::zeros_like(net)) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
}

void SgdOptimizer::step(Mlp& net, const MlpGradient& grad) {
  if (momentum_ == 0.0) {
    net.add_scaled(grad, -lr_);
    return;
  }
  velocity_ *= momentum_;
  velocity_ += grad;
  net.add_scaled(velocity_, -lr_);
}

// ---------------------------------------------------------------------------
// Training

DeepAlgorithm parse_deep_algorithm(std::string_view name) {
  if (name == "dqn") return DeepAlgorithm::dqn;
  if (name == "agt2_dqn") return DeepAlgorithm::agt2_dqn;
  if (name == "sgt2_dqn") return DeepAlgorithm::sgt2_dqn;
  throw std::invalid_argument("unknown deep algorithm '" + std::string(name) +
                              "' (expected dqn, agt2_dqn or sgt2_dqn)");
}

std::string_view to_string(DeepAlgorithm algo) {
  switch (algo) {
    case DeepAlgorithm::dqn: return "dqn";
    case DeepAlgorithm::agt2_dqn: return "agt2_dqn";
    case DeepAlgorithm::sgt2_dqn: return "sgt2_dqn";
  }
  return "?";
}

void DeepConfig::validate() const {
  if (update_period < 1) throw std::invalid_argument("update period C must be >= 1");
  if (!(polyak_tau >= 0.0 && polyak_tau <= 1.0))
    throw std::invalid_argument("polyak_tau must lie in [0, 1]");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("step size alpha must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
        epsilon_end <= 1.0))
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (epsilon_decay_steps < 0) throw std::invalid_argument("epsilon_decay_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (buffer_capacity < static_cast<std::size_t>(batch_size))
    throw std::invalid_argument("replay capacity must hold at least one batch");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  if (max_env_steps < 0) throw std::invalid_argument("max_env_steps must be >= 0");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("hidden sizes must be positive");
}

double DeepConfig::epsilon_at(long step) const {
  if (epsilon_decay_steps == 0 || step >= epsilon_decay_steps) return epsilon_end;
  const double frac = static_cast<double>(step) / static_cast<double>(epsilon_decay_steps);
  return epsilon_start + frac * (epsilon_end - epsilon_start);
}

DeepRun train(DeepAlgorithm algo, VectorEnv& env, const DeepConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<int> sizes{env.obs_dim()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(env.n_actions());

  Mlp online = Mlp::random(sizes, rng);
  Mlp target = cfg.independent_target_init ? Mlp::random(sizes, rng) : online;
  DeepRun run{ExperimentRecord{}, NetPair{std::move(online), std::move(target)}, 0, 0};
  run.record.algorithm = std::string(to_string(algo));
  run.record.hyper_name = algo == DeepAlgorithm::dqn ? "C" : "beta";
  run.record.hyper_value = algo == DeepAlgorithm::dqn ? cfg.update_period : cfg.beta;
  run.record.seed = cfg.seed;

  SgdOptimizer opt1(run.nets.online, cfg.alpha, cfg.momentum);
  SgdOptimizer opt2(run.nets.target, cfg.alpha, cfg.momentum);
  ReplayBuffer buffer(cfg.buffer_capacity, env.obs_dim());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, env.n_actions() - 1);

  Vector obs = env.reset();
  double episode_return = 0.0;
  long episode = 0;
  while (episode < cfg.episodes &&
         (cfg.max_env_steps == 0 || run.env_steps < cfg.max_env_steps)) {
    int action;
    if (unif(rng) < cfg.epsilon_at(run.env_steps)) {
      action = random_action(rng);
    } else {
      const Vector q = run.nets.online.forward(obs);
      Eigen::Index best;
      q.maxCoeff(&best);  // first maximum on ties
      action = static_cast<int>(best);
    }
    const VectorStep st = env.step(action);
    ++run.env_steps;
    buffer.push(obs, action, st.reward, st.obs, st.terminal);
    episode_return += st.reward;

    if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      const Batch batch = buffer.sample(cfg.batch_size, rng);
      if (algo == DeepAlgorithm::dqn) {
        const LossGrad lg = dqn_loss_grad(run.nets.online, run.nets.target, batch, cfg.gamma);
        opt1.step(run.nets.online, lg.grad);
        ++run.gradient_steps;
        if (cfg.polyak_tau > 0.0) {
          run.nets.target.set_flat((1.0 - cfg.polyak_tau) * run.nets.target.flat() +
                                   cfg.polyak_tau * run.nets.online.flat());
        } else if (run.gradient_steps % cfg.update_period == 0) {
          run.nets.target = run.nets.online;
        }
      } else {
        const PairLossGrad lg =
            algo == DeepAlgorithm::agt2_dqn
                ? agt2_loss_grad(run.nets.online, run.nets.target, batch, cfg.beta, cfg.gamma)
                : sgt2_loss_grad(run.nets.online, run.nets.target, batch, cfg.beta, cfg.gamma);
        opt1.step(run.nets.online, lg.grad1);
        opt2.step(run.nets.target, lg.grad2);
        ++run.gradient_steps;
      }
      if (!run.nets.online.finite() || !run.nets.target.finite()) {
        run.record.diverged = true;
        run.record.add(episode, "return", std::nan(""));
        return run;
      }
    }

    if (st.terminal || st.truncated) {
      run.record.add(episode++, "return", episode_return);
      episode_return = 0.0;
      obs = env.reset();
    } else {
      obs = st.obs;
    }
  }
  return run;
}

}  // namespace gtt
