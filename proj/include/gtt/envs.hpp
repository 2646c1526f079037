#pragma once

#include "gtt/mdp.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>

namespace gtt {

using Rng = std::mt19937_64;

/// One observed step of a tabular process. `done` is true when s_next is
/// terminal and disables the bootstrap term.
struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  bool done = false;
};

struct ExampleMdp {
  TabularMDP mdp;
  BehaviorDistribution behavior;
};

/// The two-state, two-action benchmark with gamma = 0.9 and the skewed
/// behavior policy b(.|0) = (0.2, 0.8), b(.|1) = (0.7, 0.3); uniform p.
ExampleMdp example_mdp();

/// Random model with Dirichlet(1) transition rows and U[0,1] rewards.
TabularMDP random_mdp(int n_states, int n_actions, double gamma,
                      std::uint64_t seed);

/// Draw s ~ p, a ~ b(.|s), s' ~ P(.|s,a) independently (i.i.d. observation
/// model) and return the resulting transition.
Transition sample_iid(const TabularMDP& mdp, const BehaviorDistribution& beh,
                      Rng& rng);

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng);

struct TabularStep {
  int s_next = 0;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

/// Episodic wrapper around a TabularMDP with an initial-state distribution and
/// an episode cap. Stepping after an episode ended requires reset().
class TabularEnv {
 public:
  TabularEnv(TabularMDP mdp, Vector initial_dist, int max_steps,
             std::string name = "tabular");

  int reset(Rng& rng);
  TabularStep step(int action, Rng& rng);

  const TabularMDP& model() const { return mdp_; }
  const Vector& initial_dist() const { return initial_dist_; }
  int max_steps() const { return max_steps_; }
  int state() const { return state_; }
  bool episode_over() const { return over_; }
  const std::string& name() const { return name_; }

 private:
  TabularMDP mdp_;
  Vector initial_dist_;
  int max_steps_;
  std::string name_;
  int state_ = 0;
  int t_ = 0;
  bool over_ = true;
};

enum class GridKind { frozenlake, cliffwalk, taxi_lite };

GridKind parse_grid_kind(std::string_view name);
std::string_view to_string(GridKind kind);

/// Variant parameters. `slip` moves the agent to each perpendicular
/// direction with probability slip/2 (FrozenLake only). `max_steps <= 0`
/// selects the per-kind default (100 / 200 / 200).
struct GridParams {
  double slip = 0.0;
  double gamma = 0.99;
  int max_steps = 0;
};

/// FrozenLake: 4x4 map SFFF/FHFH/FFFH/HFFG, +1 on reaching G, holes end the
/// episode with 0. Actions: 0 left, 1 down, 2 right, 3 up.
///
/// CliffWalk: 4x12, start bottom-left, goal bottom-right, -1 per move, -100
/// for stepping into the cliff which sends the agent back to the start
/// without ending the episode. Actions: 0 up, 1 right, 2 down, 3 left.
///
/// Taxi-lite: 5x5 Taxi map with walls and depots R, G, Y, B. The destination
/// is fixed at B and the passenger waits at R, G or Y, so the model has
/// 25 * 5 + 1 = 126 states. Actions: 0 south, 1 north, 2 east, 3 west,
/// 4 pickup, 5 dropoff. -1 per step, -10 for an illegal pickup/dropoff,
/// +20 for delivery (terminal).
TabularEnv gridworld(GridKind kind, const GridParams& params = {});

/// Step result for environments with vector observations.
struct VectorStep {
  Vector obs;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

class VectorEnv {
 public:
  virtual ~VectorEnv() = default;
  virtual int obs_dim() const = 0;
  virtual int n_actions() const = 0;
  virtual int max_steps() const = 0;
  virtual Vector reset() = 0;
  virtual VectorStep step(int action) = 0;
};

/// Cart-pole balancing with explicit-Euler dynamics (dt = 0.02 s), gravity
/// 9.8, cart mass 1.0, pole mass 0.1, pole half-length 0.5, force 10.0.
/// Episodes end when |x| > 2.4 or |theta| > 12 degrees; reward +1 per step;
/// truncation after `max_steps` (default 500).
class CartPole final : public VectorEnv {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForce = 10.0;
  static constexpr double kDt = 0.02;
  static constexpr double kThetaLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kXLimit = 2.4;

  explicit CartPole(std::uint64_t seed, int max_steps = 500);

  int obs_dim() const override { return 4; }
  int n_actions() const override { return 2; }
  int max_steps() const override { return max_steps_; }
  Vector reset() override;
  /// Start an episode from an explicit (x, x_dot, theta, theta_dot).
  Vector reset_to(const Vector& state);
  VectorStep step(int action) override;

  const Vector& state() const { return state_; }

 private:
  Rng rng_;
  int max_steps_;
  Vector state_ = Vector::Zero(4);
  int t_ = 0;
  bool over_ = true;
};

/// Exposes a TabularEnv through one-hot state observations.
class OneHotEnv final : public VectorEnv {
 public:
  OneHotEnv(TabularEnv env, std::uint64_t seed);

  int obs_dim() const override { return env_.model().n_states(); }
  int n_actions() const override { return env_.model().n_actions(); }
  int max_steps() const override { return env_.max_steps(); }
  Vector reset() override;
  VectorStep step(int action) override;

  Vector encode(int s) const;

 private:
  TabularEnv env_;
  Rng rng_;
};

}  // namespace gtt
