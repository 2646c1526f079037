#include "gtt/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace gtt {

ExampleMdp example_mdp() {
  Matrix P1(2, 2), P2(2, 2);
  P1 << 0.2, 0.8,
        0.3, 0.7;
  P2 << 0.5, 0.5,
        0.7, 0.3;
  Vector R(4);
  R << 3.0, 1.0,   // R_1
       2.0, 1.0;   // R_2
  Matrix b(2, 2);
  b << 0.2, 0.8,
       0.7, 0.3;
  return ExampleMdp{TabularMDP({P1, P2}, R, 0.9),
                    BehaviorDistribution(Vector::Constant(2, 0.5), b)};
}

TabularMDP random_mdp(int n_states, int n_actions, double gamma,
                      std::uint64_t seed) {
  if (n_states < 1 || n_actions < 1)
    throw DimensionError("random_mdp needs n_states >= 1 and n_actions >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("random_mdp: discount must lie in [0, 1)");
  Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Matrix> trans(n_actions, Matrix(n_states, n_states));
  for (auto& P : trans)
    for (int s = 0; s < n_states; ++s) {
      for (int t = 0; t < n_states; ++t) P(s, t) = expo(rng);
      P.row(s) /= P.row(s).sum();
    }
  Vector R(n_states * n_actions);
  for (int i = 0; i < R.size(); ++i) R[i] = unif(rng);
  return TabularMDP(std::move(trans), std::move(R), gamma);
}

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the cumulative sum: take the last positive entry.
  for (int i = n - 1; i >= 0; --i)
    if (probs[i] > 0.0) return i;
  return n - 1;
}

Transition sample_iid(const TabularMDP& mdp, const BehaviorDistribution& beh,
                      Rng& rng) {
  Transition t;
  t.s = sample_index(beh.state_dist().transpose(), rng);
  t.a = sample_index(beh.policy().row(t.s), rng);
  t.s_next = sample_index(mdp.transition(t.a).row(t.s), rng);
  t.r = mdp.reward(t.s, t.a, t.s_next);
  t.done = mdp.terminal(t.s_next);
  return t;
}

// ---------------------------------------------------------------------------

TabularEnv::TabularEnv(TabularMDP mdp, Vector initial_dist, int max_steps,
                       std::string name)
    : mdp_(std::move(mdp)),
      initial_dist_(std::move(initial_dist)),
      max_steps_(max_steps),
      name_(std::move(name)) {
  if (initial_dist_.size() != mdp_.n_states())
    throw DimensionError("initial distribution must cover every state");
  if (std::abs(initial_dist_.sum() - 1.0) > 1e-9 ||
      (initial_dist_.array() < 0.0).any())
    throw std::invalid_argument("initial distribution is not a probability vector");
  if (max_steps_ < 1) throw std::invalid_argument("max_steps must be >= 1");
}

int TabularEnv::reset(Rng& rng) {
  state_ = sample_index(initial_dist_.transpose(), rng);
  t_ = 0;
  over_ = false;
  return state_;
}

TabularStep TabularEnv::step(int action, Rng& rng) {
  if (over_) throw std::logic_error(name_ + ": step() after the episode ended; call reset()");
  if (action < 0 || action >= mdp_.n_actions())
    throw DimensionError(name_ + ": action out of range");
  TabularStep out;
  out.s_next = sample_index(mdp_.transition(action).row(state_), rng);
  out.reward = mdp_.reward(state_, action, out.s_next);
  out.terminal = mdp_.terminal(out.s_next);
  ++t_;
  out.truncated = !out.terminal && t_ >= max_steps_;
  over_ = out.terminal || out.truncated;
  state_ = out.s_next;
  return out;
}

GridKind parse_grid_kind(std::string_view name) {
  if (name == "frozenlake") return GridKind::frozenlake;
  if (name == "cliffwalk") return GridKind::cliffwalk;
  if (name == "taxi_lite") return GridKind::taxi_lite;
  throw std::invalid_argument("unknown grid world '" + std::string(name) +
                              "' (expected frozenlake, cliffwalk or taxi_lite)");
}

std::string_view to_string(GridKind kind) {
  switch (kind) {
    case GridKind::frozenlake: return "frozenlake";
    case GridKind::cliffwalk: return "cliffwalk";
    case GridKind::taxi_lite: return "taxi_lite";
  }
  return "?";
}

namespace {

// Accumulates (prob, s', r) outcomes into P and r(s,a,s'). Outcomes of one
// (s,a) that share s' with different rewards are merged at their
// probability-weighted mean reward.
class ModelBuilder {
 public:
  ModelBuilder(int n_states, int n_actions)
      : P_(n_actions, Matrix::Zero(n_states, n_states)),
        Rsum_(n_actions, Matrix::Zero(n_states, n_states)),
        terminal_(n_states, false) {}

  void add(int s, int a, int s_next, double prob, double reward) {
    P_[a](s, s_next) += prob;
    Rsum_[a](s, s_next) += prob * reward;
  }
  void set_terminal(int s) { terminal_[s] = true; }

  TabularMDP build(double gamma) {
    const int A = static_cast<int>(P_.size());
    const int S = static_cast<int>(P_[0].rows());
    for (int s = 0; s < S; ++s) {
      if (!terminal_[s]) continue;
      for (int a = 0; a < A; ++a) {
        P_[a].row(s).setZero();
        Rsum_[a].row(s).setZero();
        P_[a](s, s) = 1.0;
      }
    }
    std::vector<Matrix> r(A, Matrix::Zero(S, S));
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s)
        for (int t = 0; t < S; ++t)
          if (P_[a](s, t) > 0.0) r[a](s, t) = Rsum_[a](s, t) / P_[a](s, t);
    return TabularMDP::with_transition_rewards(P_, r, gamma, terminal_);
  }

 private:
  std::vector<Matrix> P_;
  std::vector<Matrix> Rsum_;
  std::vector<bool> terminal_;
};

TabularEnv make_frozenlake(const GridParams& p) {
  static constexpr std::array<const char*, 4> kMap = {"SFFF", "FHFH", "FFFH",
                                                      "HFFG"};
  constexpr int n = 4;
  if (!(p.slip >= 0.0 && p.slip <= 1.0))
    throw std::invalid_argument("frozenlake: slip must lie in [0, 1]");
  // left, down, right, up
  constexpr int dr[4] = {0, 1, 0, -1};
  constexpr int dc[4] = {-1, 0, 1, 0};
  ModelBuilder b(n * n, 4);
  auto cell = [&](int r, int c) { return kMap[r][c]; };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const int s = r * n + c;
      if (cell(r, c) == 'H' || cell(r, c) == 'G') {
        b.set_terminal(s);
        continue;
      }
      for (int a = 0; a < 4; ++a) {
        const std::array<std::pair<int, double>, 3> moves = {
            std::pair{a, 1.0 - p.slip}, std::pair{(a + 3) % 4, p.slip / 2.0},
            std::pair{(a + 1) % 4, p.slip / 2.0}};
        for (auto [dir, prob] : moves) {
          if (prob <= 0.0) continue;
          const int nr = std::clamp(r + dr[dir], 0, n - 1);
          const int nc = std::clamp(c + dc[dir], 0, n - 1);
          b.add(s, a, nr * n + nc, prob, cell(nr, nc) == 'G' ? 1.0 : 0.0);
        }
      }
    }
  Vector init = Vector::Zero(n * n);
  init[0] = 1.0;
  return TabularEnv(b.build(p.gamma), init, p.max_steps > 0 ? p.max_steps : 100,
                    "frozenlake");
}

TabularEnv make_cliffwalk(const GridParams& p) {
  constexpr int rows = 4, cols = 12;
  constexpr int start = (rows - 1) * cols;
  constexpr int goal = rows * cols - 1;
  // up, right, down, left
  constexpr int dr[4] = {-1, 0, 1, 0};
  constexpr int dc[4] = {0, 1, 0, -1};
  auto is_cliff = [&](int r, int c) { return r == rows - 1 && c > 0 && c < cols - 1; };
  ModelBuilder b(rows * cols, 4);
  b.set_terminal(goal);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int s = r * cols + c;
      if (s == goal) continue;
      for (int a = 0; a < 4; ++a) {
        const int nr = std::clamp(r + dr[a], 0, rows - 1);
        const int nc = std::clamp(c + dc[a], 0, cols - 1);
        if (is_cliff(nr, nc))
          b.add(s, a, start, 1.0, -100.0);
        else
          b.add(s, a, nr * cols + nc, 1.0, -1.0);
      }
    }
  Vector init = Vector::Zero(rows * cols);
  init[start] = 1.0;
  return TabularEnv(b.build(p.gamma), init, p.max_steps > 0 ? p.max_steps : 200,
                    "cliffwalk");
}

TabularEnv make_taxi_lite(const GridParams& p) {
  constexpr int n = 5;
  constexpr int kInTaxi = 4;
  constexpr int kDest = 3;  // depot B
  constexpr int kLocs = 5;
  constexpr int terminal = n * n * kLocs;
  constexpr std::array<std::pair<int, int>, 4> depots = {
      std::pair{0, 0}, std::pair{0, 4}, std::pair{4, 0}, std::pair{4, 3}};
  // Walls block east moves out of these cells (and west moves into them).
  auto wall_east = [](int r, int c) {
    return (c == 1 && (r == 0 || r == 1)) || (c == 0 && (r == 3 || r == 4)) ||
           (c == 2 && (r == 3 || r == 4));
  };
  auto id = [&](int r, int c, int loc) { return (r * n + c) * kLocs + loc; };
  ModelBuilder b(terminal + 1, 6);
  b.set_terminal(terminal);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int loc = 0; loc < kLocs; ++loc) {
        const int s = id(r, c, loc);
        // 0 south, 1 north, 2 east, 3 west
        for (int a = 0; a < 4; ++a) {
          int nr = r, nc = c;
          if (a == 0) nr = std::min(r + 1, n - 1);
          if (a == 1) nr = std::max(r - 1, 0);
          if (a == 2 && !wall_east(r, c)) nc = std::min(c + 1, n - 1);
          if (a == 3 && !(c > 0 && wall_east(r, c - 1))) nc = std::max(c - 1, 0);
          b.add(s, a, id(nr, nc, loc), 1.0, -1.0);
        }
        const bool at_passenger = loc < 4 && depots[loc] == std::pair{r, c};
        if (at_passenger)
          b.add(s, 4, id(r, c, kInTaxi), 1.0, -1.0);
        else
          b.add(s, 4, s, 1.0, -10.0);
        const bool at_dest = loc == kInTaxi && depots[kDest] == std::pair{r, c};
        if (at_dest)
          b.add(s, 5, terminal, 1.0, 20.0);
        else
          b.add(s, 5, s, 1.0, -10.0);
      }
  Vector init = Vector::Zero(terminal + 1);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int loc = 0; loc < 3; ++loc) init[id(r, c, loc)] = 1.0;
  init /= init.sum();
  return TabularEnv(b.build(p.gamma), init, p.max_steps > 0 ? p.max_steps : 200,
                    "taxi_lite");
}

}  // namespace

TabularEnv gridworld(GridKind kind, const GridParams& params) {
  switch (kind) {
    case GridKind::frozenlake: return make_frozenlake(params);
    case GridKind::cliffwalk: return make_cliffwalk(params);
    case GridKind::taxi_lite: return make_taxi_lite(params);
  }
  throw std::invalid_argument("unknown grid kind");
}

// ---------------------------------------------------------------------------

CartPole::CartPole(std::uint64_t seed, int max_steps)
    : rng_(seed), max_steps_(max_steps) {
  if (max_steps_ < 1) throw std::invalid_argument("cartpole: max_steps must be >= 1");
}

Vector CartPole::reset() {
  std::uniform_real_distribution<double> unif(-0.05, 0.05);
  Vector s(4);
  for (int i = 0; i < 4; ++i) s[i] = unif(rng_);
  return reset_to(s);
}

Vector CartPole::reset_to(const Vector& state) {
  if (state.size() != 4) throw DimensionError("cartpole state has 4 components");
  state_ = state;
  t_ = 0;
  over_ = false;
  return state_;
}

VectorStep CartPole::step(int action) {
  if (over_) throw std::logic_error("cartpole: step() after the episode ended; call reset()");
  if (action != 0 && action != 1) throw DimensionError("cartpole: action must be 0 or 1");
  const double x = state_[0], x_dot = state_[1];
  const double theta = state_[2], theta_dot = state_[3];
  const double force = action == 1 ? kForce : -kForce;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double total_mass = kMassCart + kMassPole;
  const double pole_ml = kMassPole * kHalfLength;
  const double temp = (force + pole_ml * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) /
      (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  state_[0] = x + kDt * x_dot;
  state_[1] = x_dot + kDt * x_acc;
  state_[2] = theta + kDt * theta_dot;
  state_[3] = theta_dot + kDt * theta_acc;
  ++t_;

  VectorStep out;
  out.obs = state_;
  out.reward = 1.0;
  out.terminal = std::abs(state_[0]) > kXLimit || std::abs(state_[2]) > kThetaLimit;
  out.truncated = !out.terminal && t_ >= max_steps_;
  over_ = out.terminal || out.truncated;
  return out;
}

OneHotEnv::OneHotEnv(TabularEnv env, std::uint64_t seed)
    : env_(std::move(env)), rng_(seed) {}

Vector OneHotEnv::encode(int s) const {
  Vector v = Vector::Zero(env_.model().n_states());
  v[s] = 1.0;
  return v;
}

Vector OneHotEnv::reset() { return encode(env_.reset(rng_)); }

VectorStep OneHotEnv::step(int action) {
  const TabularStep st = env_.step(action, rng_);
  return VectorStep{encode(st.s_next), st.reward, st.terminal, st.truncated};
}

}  // namespace gtt
