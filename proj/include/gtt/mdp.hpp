#pragma once

// Finite MDPs in the stacked state-action notation used throughout the
// library. A Q-function is a single vector enumerated action-major:
//
//     index(s, a) = a * |S| + s,    Q = [Q(., 0); Q(., 1); ...; Q(., |A|-1)]
//
// so that D, P and the policy selector Pi are literal block matrices.

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a size or index does not match the model it is used with.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when some state-action pair has zero sampling mass.
class ExplorationError : public std::invalid_argument {
 public:
  ExplorationError(int state, int action, const std::string& what)
      : std::invalid_argument(what), state_(state), action_(action) {}
  int state() const { return state_; }
  int action() const { return action_; }

 private:
  int state_;
  int action_;
};

inline constexpr double kStochasticTol = 1e-12;

/// Immutable finite MDP. Rewards are stored as the expected reward table
/// R_a(s); an optional per-transition table r(s,a,s') is kept for sampling.
/// Terminal states must self-loop with zero reward.
class TabularMDP {
 public:
  /// `trans[a]` is the |S|x|S| row-stochastic matrix P_a(s, s').
  /// `reward` is indexed action-major (length |S||A|).
  TabularMDP(std::vector<Matrix> trans, Vector reward, double gamma,
             std::vector<bool> terminal = {});

  /// Same, with per-transition rewards `transition_reward[a](s, s')`; the
  /// expected table is derived from them.
  static TabularMDP with_transition_rewards(
      std::vector<Matrix> trans, std::vector<Matrix> transition_reward,
      double gamma, std::vector<bool> terminal = {});

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int n_pairs() const { return n_states_ * n_actions_; }
  double gamma() const { return gamma_; }

  int index(int s, int a) const { return a * n_states_ + s; }

  double prob(int a, int s, int s_next) const { return trans_[a](s, s_next); }
  const Matrix& transition(int a) const { return trans_[a]; }
  double expected_reward(int s, int a) const { return reward_[index(s, a)]; }
  const Vector& reward_vector() const { return reward_; }
  /// r(s,a,s') if per-transition rewards exist, otherwise R_a(s).
  double reward(int s, int a, int s_next) const;
  bool has_transition_rewards() const { return transition_reward_.has_value(); }

  bool terminal(int s) const { return terminal_[s]; }
  const std::vector<bool>& terminal_flags() const { return terminal_; }

  /// Returns a copy with a different discount (used by sweeps over gamma).
  TabularMDP with_gamma(double gamma) const;

 private:
  TabularMDP() = default;
  void validate() const;

  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<Matrix> trans_;
  Vector reward_;
  std::optional<std::vector<Matrix>> transition_reward_;
  double gamma_ = 0.0;
  std::vector<bool> terminal_;
};

/// State distribution p and behavior policy b(a|s); d(s,a) = p(s) b(a|s).
class BehaviorDistribution {
 public:
  /// `policy(s, a)` = b(a|s).
  BehaviorDistribution(Vector state_dist, Matrix policy);

  static BehaviorDistribution uniform(int n_states, int n_actions);

  const Vector& state_dist() const { return state_dist_; }
  const Matrix& policy() const { return policy_; }
  double d(int s, int a) const { return state_dist_[s] * policy_(s, a); }
  int n_states() const { return static_cast<int>(state_dist_.size()); }
  int n_actions() const { return static_cast<int>(policy_.cols()); }

  /// Throws ExplorationError naming the first (s,a) with d(s,a) <= 0.
  void require_positive() const;

 private:
  Vector state_dist_;
  Matrix policy_;
};

/// Q-function vector in action-major order.
struct QTable {
  QTable() = default;
  QTable(int n_states, int n_actions, double fill = 0.0)
      : n_states(n_states),
        n_actions(n_actions),
        values(Vector::Constant(n_states * n_actions, fill)) {}
  QTable(int n_states, int n_actions, Vector v);

  double& operator()(int s, int a) { return values[a * n_states + s]; }
  double operator()(int s, int a) const { return values[a * n_states + s]; }

  double max_value(int s) const;
  int argmax(int s) const;  // lowest index on ties
  bool finite() const { return values.allFinite(); }
  int size() const { return static_cast<int>(values.size()); }

  int n_states = 0;
  int n_actions = 0;
  Vector values;
};

double sup_distance(const QTable& x, const QTable& y);

/// Deterministic policy pi(s) and its |S| x |S||A| selector matrix.
class PolicyMatrix {
 public:
  PolicyMatrix(int n_states, int n_actions, std::vector<int> actions);

  const std::vector<int>& actions() const { return actions_; }
  int action(int s) const { return actions_[s]; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  Matrix dense() const;
  /// (Pi x)(s) = x(s, pi(s)) without forming the matrix.
  Vector select(const Vector& x) const;

  bool operator==(const PolicyMatrix& other) const = default;

 private:
  int n_states_;
  int n_actions_;
  std::vector<int> actions_;
};

/// Enumerate every deterministic policy of an |S| x |A| model, in
/// lexicographic order of (pi(0), ..., pi(|S|-1)) with the last state fastest.
std::vector<PolicyMatrix> all_deterministic_policies(int n_states,
                                                     int n_actions);

/// Stacked model matrices: D (diag, length |S||A|), P (|S||A| x |S|), R.
struct StateActionMatrices {
  Vector d;
  Matrix P;
  Vector R;

  Matrix D() const { return d.asDiagonal(); }
};

QTable bellman_operator(const QTable& q, const TabularMDP& mdp);
double bellman_residual(const QTable& q, const TabularMDP& mdp);

/// Value iteration to sup-norm residual <= tol.
QTable optimal_q(const TabularMDP& mdp, double tol = 1e-10);

/// Upper bound on value-iteration sweeps from a zero start.
long value_iteration_sweep_bound(const TabularMDP& mdp, double tol);

/// Howard policy iteration; independent route to Q* used for cross-checks.
QTable policy_iteration_q(const TabularMDP& mdp);

/// Exact Q^pi for a deterministic policy (linear solve).
QTable policy_evaluation_q(const TabularMDP& mdp, const PolicyMatrix& pi);

PolicyMatrix greedy_policy(const QTable& q);
PolicyMatrix greedy_policy(const Vector& q, int n_states, int n_actions);

StateActionMatrices state_action_matrices(const TabularMDP& mdp,
                                          const BehaviorDistribution& beh);

/// Plain-text model format:
///
///     S A gamma
///     <P_0 row-major, S lines of S numbers>
///     ...
///     <P_{A-1}>
///     <R: S lines of A numbers, R(s, a)>
///     [terminal <ids...>]
///
/// Blank lines and '#' comments are ignored.
TabularMDP read_mdp(std::istream& in);
TabularMDP load_mdp(const std::string& path);
void write_mdp(std::ostream& out, const TabularMDP& mdp);

}  // namespace gtt
