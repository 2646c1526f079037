#include "gtt/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace gtt {

namespace {

std::string pair_name(int s, int a) {
  return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

}  // namespace

TabularMDP::TabularMDP(std::vector<Matrix> trans, Vector reward, double gamma,
                       std::vector<bool> terminal)
    : trans_(std::move(trans)), reward_(std::move(reward)), gamma_(gamma) {
  n_actions_ = static_cast<int>(trans_.size());
  n_states_ = n_actions_ > 0 ? static_cast<int>(trans_[0].rows()) : 0;
  terminal_ = terminal.empty() ? std::vector<bool>(n_states_, false)
                               : std::move(terminal);
  validate();
}

TabularMDP TabularMDP::with_transition_rewards(
    std::vector<Matrix> trans, std::vector<Matrix> transition_reward,
    double gamma, std::vector<bool> terminal) {
  if (transition_reward.size() != trans.size())
    throw DimensionError("transition reward needs one matrix per action");
  const int n_actions = static_cast<int>(trans.size());
  const int n_states = n_actions > 0 ? static_cast<int>(trans[0].rows()) : 0;
  Vector expected(n_states * n_actions);
  for (int a = 0; a < n_actions; ++a) {
    if (transition_reward[a].rows() != n_states ||
        transition_reward[a].cols() != n_states)
      throw DimensionError("transition reward matrix must be |S| x |S|");
    if (trans[a].rows() != n_states || trans[a].cols() != n_states)
      throw DimensionError("transition matrix must be |S| x |S|");
    for (int s = 0; s < n_states; ++s)
      expected[a * n_states + s] =
          trans[a].row(s).dot(transition_reward[a].row(s));
  }
  TabularMDP mdp(std::move(trans), std::move(expected), gamma,
                 std::move(terminal));
  mdp.transition_reward_ = std::move(transition_reward);
  mdp.validate();
  return mdp;
}

void TabularMDP::validate() const {
  if (n_states_ < 1 || n_actions_ < 1)
    throw DimensionError("MDP needs at least one state and one action");
  if (!(gamma_ >= 0.0 && gamma_ < 1.0))
    throw std::invalid_argument("discount must lie in [0, 1), got " +
                                std::to_string(gamma_));
  if (reward_.size() != n_states_ * n_actions_)
    throw DimensionError("reward vector has length " +
                         std::to_string(reward_.size()) + ", expected " +
                         std::to_string(n_states_ * n_actions_));
  if (!reward_.allFinite()) throw std::invalid_argument("non-finite reward");
  if (static_cast<int>(terminal_.size()) != n_states_)
    throw DimensionError("terminal flags must have one entry per state");
  for (int a = 0; a < n_actions_; ++a) {
    const Matrix& P = trans_[a];
    if (P.rows() != n_states_ || P.cols() != n_states_)
      throw DimensionError("transition matrix for action " +
                           std::to_string(a) + " is not |S| x |S|");
    for (int s = 0; s < n_states_; ++s) {
      if ((P.row(s).array() < 0.0).any() || !P.row(s).allFinite())
        throw std::invalid_argument("negative or non-finite probability at " +
                                    pair_name(s, a));
      if (std::abs(P.row(s).sum() - 1.0) > kStochasticTol)
        throw std::invalid_argument("transition row " + pair_name(s, a) +
                                    " does not sum to 1");
    }
  }
  for (int s = 0; s < n_states_; ++s) {
    if (!terminal_[s]) continue;
    for (int a = 0; a < n_actions_; ++a) {
      if (std::abs(trans_[a](s, s) - 1.0) > kStochasticTol)
        throw std::invalid_argument("terminal state " + std::to_string(s) +
                                    " must self-loop");
      if (reward_[a * n_states_ + s] != 0.0)
        throw std::invalid_argument("terminal state " + std::to_string(s) +
                                    " must carry zero reward");
    }
  }
}

double TabularMDP::reward(int s, int a, int s_next) const {
  if (transition_reward_) return (*transition_reward_)[a](s, s_next);
  return reward_[index(s, a)];
}

TabularMDP TabularMDP::with_gamma(double gamma) const {
  TabularMDP copy = *this;
  copy.gamma_ = gamma;
  copy.validate();
  return copy;
}

BehaviorDistribution::BehaviorDistribution(Vector state_dist, Matrix policy)
    : state_dist_(std::move(state_dist)), policy_(std::move(policy)) {
  if (policy_.rows() != state_dist_.size())
    throw DimensionError("behavior policy needs one row per state");
  if ((state_dist_.array() < 0.0).any() ||
      std::abs(state_dist_.sum() - 1.0) > kStochasticTol)
    throw std::invalid_argument("state distribution must be a probability vector");
  for (int s = 0; s < policy_.rows(); ++s) {
    if ((policy_.row(s).array() < 0.0).any() ||
        std::abs(policy_.row(s).sum() - 1.0) > kStochasticTol)
      throw std::invalid_argument("behavior policy row " + std::to_string(s) +
                                  " is not a distribution");
  }
}

BehaviorDistribution BehaviorDistribution::uniform(int n_states,
                                                   int n_actions) {
  return BehaviorDistribution(Vector::Constant(n_states, 1.0 / n_states),
                              Matrix::Constant(n_states, n_actions,
                                               1.0 / n_actions));
}

void BehaviorDistribution::require_positive() const {
  for (int a = 0; a < n_actions(); ++a)
    for (int s = 0; s < n_states(); ++s)
      if (!(d(s, a) > 0.0))
        throw ExplorationError(
            s, a, "sampling distribution has zero mass at " + pair_name(s, a));
}

QTable::QTable(int n_states_in, int n_actions_in, Vector v)
    : n_states(n_states_in), n_actions(n_actions_in), values(std::move(v)) {
  if (values.size() != n_states * n_actions)
    throw DimensionError("Q vector has length " +
                         std::to_string(values.size()) + ", expected " +
                         std::to_string(n_states * n_actions));
}

double QTable::max_value(int s) const {
  double best = (*this)(s, 0);
  for (int a = 1; a < n_actions; ++a) best = std::max(best, (*this)(s, a));
  return best;
}

int QTable::argmax(int s) const {
  int best = 0;
  for (int a = 1; a < n_actions; ++a)
    if ((*this)(s, a) > (*this)(s, best)) best = a;
  return best;
}

double sup_distance(const QTable& x, const QTable& y) {
  if (x.size() != y.size()) throw DimensionError("Q tables differ in size");
  return (x.values - y.values).cwiseAbs().maxCoeff();
}

PolicyMatrix::PolicyMatrix(int n_states, int n_actions,
                           std::vector<int> actions)
    : n_states_(n_states), n_actions_(n_actions), actions_(std::move(actions)) {
  if (static_cast<int>(actions_.size()) != n_states_)
    throw DimensionError("policy needs one action per state");
  for (int a : actions_)
    if (a < 0 || a >= n_actions_)
      throw DimensionError("policy action out of range");
}

Matrix PolicyMatrix::dense() const {
  Matrix pi = Matrix::Zero(n_states_, n_states_ * n_actions_);
  for (int s = 0; s < n_states_; ++s) pi(s, actions_[s] * n_states_ + s) = 1.0;
  return pi;
}

Vector PolicyMatrix::select(const Vector& x) const {
  if (x.size() != n_states_ * n_actions_)
    throw DimensionError("selector input has wrong length");
  Vector out(n_states_);
  for (int s = 0; s < n_states_; ++s) out[s] = x[actions_[s] * n_states_ + s];
  return out;
}

std::vector<PolicyMatrix> all_deterministic_policies(int n_states,
                                                     int n_actions) {
  std::vector<PolicyMatrix> out;
  std::vector<int> digits(n_states, 0);
  while (true) {
    out.emplace_back(n_states, n_actions, digits);
    int pos = n_states - 1;
    while (pos >= 0 && ++digits[pos] == n_actions) digits[pos--] = 0;
    if (pos < 0) break;
  }
  return out;
}

namespace {

void check_size(const QTable& q, const TabularMDP& mdp) {
  if (q.n_states != mdp.n_states() || q.n_actions != mdp.n_actions() ||
      q.size() != mdp.n_pairs())
    throw DimensionError("Q table is " + std::to_string(q.n_states) + "x" +
                         std::to_string(q.n_actions) + " but the MDP is " +
                         std::to_string(mdp.n_states()) + "x" +
                         std::to_string(mdp.n_actions()));
}

// V(s') = 1(s') max_a Q(s', a)
Vector bootstrap_values(const QTable& q, const TabularMDP& mdp) {
  Vector v(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s)
    v[s] = mdp.terminal(s) ? 0.0 : q.max_value(s);
  return v;
}

}  // namespace

QTable bellman_operator(const QTable& q, const TabularMDP& mdp) {
  check_size(q, mdp);
  const Vector v = bootstrap_values(q, mdp);
  QTable out(mdp.n_states(), mdp.n_actions());
  for (int a = 0; a < mdp.n_actions(); ++a) {
    const Vector next = mdp.transition(a) * v;
    for (int s = 0; s < mdp.n_states(); ++s)
      out(s, a) = mdp.expected_reward(s, a) + mdp.gamma() * next[s];
  }
  return out;
}

double bellman_residual(const QTable& q, const TabularMDP& mdp) {
  return sup_distance(bellman_operator(q, mdp), q);
}

long value_iteration_sweep_bound(const TabularMDP& mdp, double tol) {
  const double range = mdp.reward_vector().cwiseAbs().maxCoeff();
  const double g = mdp.gamma();
  if (g == 0.0 || range == 0.0) return 1;
  const double ratio = tol * (1.0 - g) / range;
  if (ratio >= 1.0) return 1;
  return static_cast<long>(std::ceil(std::log(ratio) / std::log(g))) + 1;
}

QTable optimal_q(const TabularMDP& mdp, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  QTable q(mdp.n_states(), mdp.n_actions());
  const long cap = value_iteration_sweep_bound(mdp, tol) + 1;
  for (long it = 0; it < cap; ++it) {
    QTable next = bellman_operator(q, mdp);
    const double residual = sup_distance(next, q);
    q = std::move(next);
    if (residual <= tol) break;
  }
  return q;
}

QTable policy_evaluation_q(const TabularMDP& mdp, const PolicyMatrix& pi) {
  const int S = mdp.n_states();
  const int n = mdp.n_pairs();
  // Q = R + gamma P diag(1(s')) Pi Q
  Matrix P(n, S);
  for (int a = 0; a < mdp.n_actions(); ++a) P.middleRows(a * S, S) = mdp.transition(a);
  for (int s = 0; s < S; ++s)
    if (mdp.terminal(s)) P.col(s).setZero();
  const Matrix A = Matrix::Identity(n, n) - mdp.gamma() * P * pi.dense();
  return QTable(S, mdp.n_actions(), A.partialPivLu().solve(mdp.reward_vector()));
}

QTable policy_iteration_q(const TabularMDP& mdp) {
  PolicyMatrix pi(mdp.n_states(), mdp.n_actions(),
                  std::vector<int>(mdp.n_states(), 0));
  for (int it = 0; it < 10000; ++it) {
    const QTable q = policy_evaluation_q(mdp, pi);
    // Keep the incumbent action unless another is strictly better, so the
    // loop terminates on ties.
    std::vector<int> next = pi.actions();
    bool changed = false;
    for (int s = 0; s < mdp.n_states(); ++s) {
      const int best = q.argmax(s);
      if (q(s, best) > q(s, next[s]) + 1e-12) {
        next[s] = best;
        changed = true;
      }
    }
    if (!changed) return q;
    pi = PolicyMatrix(mdp.n_states(), mdp.n_actions(), std::move(next));
  }
  throw std::runtime_error("policy iteration did not converge");
}

PolicyMatrix greedy_policy(const QTable& q) {
  std::vector<int> actions(q.n_states);
  for (int s = 0; s < q.n_states; ++s) actions[s] = q.argmax(s);
  return PolicyMatrix(q.n_states, q.n_actions, std::move(actions));
}

PolicyMatrix greedy_policy(const Vector& q, int n_states, int n_actions) {
  if (q.size() != n_states * n_actions)
    throw DimensionError("Q vector has wrong length for greedy policy");
  std::vector<int> actions(n_states);
  for (int s = 0; s < n_states; ++s) {
    int best = 0;
    for (int a = 1; a < n_actions; ++a)
      if (q[a * n_states + s] > q[best * n_states + s]) best = a;
    actions[s] = best;
  }
  return PolicyMatrix(n_states, n_actions, std::move(actions));
}

StateActionMatrices state_action_matrices(const TabularMDP& mdp,
                                          const BehaviorDistribution& beh) {
  if (beh.n_states() != mdp.n_states() || beh.n_actions() != mdp.n_actions())
    throw DimensionError("behavior distribution does not match the MDP");
  beh.require_positive();
  const int S = mdp.n_states();
  StateActionMatrices m;
  m.d.resize(mdp.n_pairs());
  m.P.resize(mdp.n_pairs(), S);
  for (int a = 0; a < mdp.n_actions(); ++a) {
    m.P.middleRows(a * S, S) = mdp.transition(a);
    for (int s = 0; s < S; ++s) m.d[a * S + s] = beh.d(s, a);
  }
  m.R = mdp.reward_vector();
  return m;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) tokens_.push_back({tok, lineno});
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }

  const std::string& peek() const { return tokens_.at(pos_).text; }

  double number() {
    if (done()) throw std::runtime_error("MDP file: unexpected end of input");
    const auto& t = tokens_[pos_++];
    try {
      std::size_t used = 0;
      double v = std::stod(t.text, &used);
      if (used != t.text.size()) throw std::invalid_argument(t.text);
      return v;
    } catch (const std::exception&) {
      throw std::runtime_error("MDP file line " + std::to_string(t.line) +
                               ": expected a number, got '" + t.text + "'");
    }
  }

  int integer() {
    const int line = done() ? 0 : tokens_[pos_].line;
    double v = number();
    if (v != std::floor(v))
      throw std::runtime_error("MDP file line " + std::to_string(line) +
                               ": expected an integer");
    return static_cast<int>(v);
  }

  void skip() { ++pos_; }

 private:
  struct Token {
    std::string text;
    int line;
  };
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

TabularMDP read_mdp(std::istream& in) {
  TokenReader rd(in);
  const int S = rd.integer();
  const int A = rd.integer();
  const double gamma = rd.number();
  if (S < 1 || A < 1) throw std::runtime_error("MDP file: sizes must be >= 1");
  std::vector<Matrix> trans(A, Matrix(S, S));
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s)
      for (int t = 0; t < S; ++t) trans[a](s, t) = rd.number();
  Vector reward(S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) reward[a * S + s] = rd.number();
  std::vector<bool> terminal(S, false);
  if (!rd.done()) {
    if (rd.peek() != "terminal")
      throw std::runtime_error("MDP file: trailing content '" + rd.peek() + "'");
    rd.skip();
    while (!rd.done()) {
      const int s = rd.integer();
      if (s < 0 || s >= S) throw std::runtime_error("MDP file: terminal id out of range");
      terminal[s] = true;
    }
  }
  return TabularMDP(std::move(trans), std::move(reward), gamma, std::move(terminal));
}

TabularMDP load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MDP file '" + path + "'");
  return read_mdp(in);
}

void write_mdp(std::ostream& out, const TabularMDP& mdp) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  out << std::setprecision(17);
  out << S << ' ' << A << ' ' << mdp.gamma() << '\n';
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) {
      for (int t = 0; t < S; ++t) out << (t ? " " : "") << mdp.prob(a, s, t);
      out << '\n';
    }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) out << (a ? " " : "") << mdp.expected_reward(s, a);
    out << '\n';
  }
  bool any = false;
  for (int s = 0; s < S; ++s) any = any || mdp.terminal(s);
  if (any) {
    out << "terminal";
    for (int s = 0; s < S; ++s)
      if (mdp.terminal(s)) out << ' ' << s;
    out << '\n';
  }
}

}  // namespace gtt
