#include "gtt/analysis.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gtt {

namespace {

void check_shapes(const QPair& pair, const TabularMDP& mdp) {
  if (pair.a.n_states != mdp.n_states() || pair.a.n_actions != mdp.n_actions() ||
      pair.b.n_states != mdp.n_states() || pair.b.n_actions != mdp.n_actions())
    throw DimensionError("Q-tables do not match the MDP");
}

// E_{s'}[(r(s,a,s') + 1(s') gamma max boot(s',.) - q(s,a))^2], averaged
// uniformly over (s,a).
double bellman_mse(const QTable& q, const QTable& boot, const TabularMDP& mdp) {
  const int S = mdp.n_states(), A = mdp.n_actions();
  double total = 0.0;
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < S; ++s) {
      double e = 0.0;
      for (int t = 0; t < S; ++t) {
        const double p = mdp.prob(a, s, t);
        if (p == 0.0) continue;
        const double y = mdp.reward(s, a, t) +
                         (mdp.terminal(t) ? 0.0 : mdp.gamma() * boot.max_value(t));
        const double diff = y - q(s, a);
        e += p * diff * diff;
      }
      total += e;
    }
  return total / static_cast<double>(S * A);
}

double tracking_term(const QPair& pair, double beta) {
  return 0.5 * beta * (pair.a.values - pair.b.values).squaredNorm() /
         static_cast<double>(pair.a.size());
}

}  // namespace

LossPair expected_losses_agt2(const QPair& pair, const TabularMDP& mdp, double beta) {
  check_shapes(pair, mdp);
  return {bellman_mse(pair.a, pair.b, mdp), tracking_term(pair, beta)};
}

LossPair expected_losses_sgt2(const QPair& pair, const TabularMDP& mdp, double beta) {
  check_shapes(pair, mdp);
  const double reg = tracking_term(pair, beta);
  return {bellman_mse(pair.a, pair.b, mdp) + reg, bellman_mse(pair.b, pair.a, mdp) + reg};
}

BoundPair theorem1_bound(double epsilon, double beta, double gamma, long n_sa) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("bound needs a discount in [0, 1)");
  if (!(beta > 0.0)) throw std::invalid_argument("bound needs beta > 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("bound needs epsilon >= 0");
  if (n_sa < 1) throw std::invalid_argument("bound needs n_sa >= 1");
  const double en = epsilon * static_cast<double>(n_sa);
  const double first = std::sqrt(en) / (1.0 - gamma);
  const double second = gamma / (1.0 - gamma) * std::sqrt(2.0 * en / beta);
  return {first + second, 2.0 * first + second};
}

double theorem2_bound(double epsilon, double beta, double gamma, long n_sa) {
  return theorem1_bound(epsilon, beta, gamma, n_sa).q1;
}

TrackingVariant parse_tracking_variant(std::string_view name) {
  if (name == "agt2") return TrackingVariant::agt2;
  if (name == "sgt2") return TrackingVariant::sgt2;
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected agt2 or sgt2)");
}

std::string_view to_string(TrackingVariant v) {
  return v == TrackingVariant::agt2 ? "agt2" : "sgt2";
}

BoundReport verify_bounds(const QPair& pair, const TabularMDP& mdp, double beta,
                          TrackingVariant which) {
  return verify_bounds(pair, mdp, beta, which, policy_iteration_q(mdp));
}

BoundReport verify_bounds(const QPair& pair, const TabularMDP& mdp, double beta,
                          TrackingVariant which, const QTable& qstar) {
  const LossPair losses = which == TrackingVariant::agt2
                              ? expected_losses_agt2(pair, mdp, beta)
                              : expected_losses_sgt2(pair, mdp, beta);
  BoundReport r;
  r.loss1 = losses.first;
  r.loss2 = losses.second;
  r.epsilon = std::max(losses.first, losses.second);
  const long n = mdp.n_pairs();
  if (which == TrackingVariant::agt2) {
    const BoundPair b = theorem1_bound(r.epsilon, beta, mdp.gamma(), n);
    r.bound_q1 = b.q1;
    r.bound_q2 = b.q2;
  } else {
    r.bound_q1 = r.bound_q2 = theorem2_bound(r.epsilon, beta, mdp.gamma(), n);
  }
  r.observed_err_q1 = sup_distance(pair.a, qstar);
  r.observed_err_q2 = sup_distance(pair.b, qstar);
  r.satisfied_q1 = r.observed_err_q1 <= r.bound_q1 + kBoundRoundoff;
  r.satisfied_q2 = r.observed_err_q2 <= r.bound_q2 + kBoundRoundoff;
  return r;
}

}  // namespace gtt
