#pragma once

#include "gtt/mdp.hpp"
#include "gtt/tabular.hpp"

#include <string_view>

namespace gtt {

struct LossPair {
  double first = 0.0;
  double second = 0.0;
};

/// Exact expected losses over uniform (s,a) and s' ~ P(.|s,a):
///   L1 = E[(r + 1(s') gamma max Q^B(s',.) - Q^A(s,a))^2]
///   L2 = (beta/2) E[(Q^A(s,a) - Q^B(s,a))^2]
LossPair expected_losses_agt2(const QPair& pair, const TabularMDP& mdp, double beta);

/// Symmetric losses: each carries its own cross-bootstrapped Bellman term
/// plus (beta/2)(Q^A - Q^B)^2.
LossPair expected_losses_sgt2(const QPair& pair, const TabularMDP& mdp, double beta);

struct BoundPair {
  double q1 = 0.0;
  double q2 = 0.0;
};

/// q1 = sqrt(eps n)/(1-g) + g/(1-g) sqrt(2 eps n / beta); q2 doubles the
/// first term.
BoundPair theorem1_bound(double epsilon, double beta, double gamma, long n_sa);
/// Symmetric bound, shared by both tables; equals theorem1_bound(...).q1.
double theorem2_bound(double epsilon, double beta, double gamma, long n_sa);

enum class TrackingVariant { agt2, sgt2 };

TrackingVariant parse_tracking_variant(std::string_view name);
std::string_view to_string(TrackingVariant v);

struct BoundReport {
  double loss1 = 0.0;
  double loss2 = 0.0;
  double epsilon = 0.0;
  double bound_q1 = 0.0;
  double bound_q2 = 0.0;
  double observed_err_q1 = 0.0;
  double observed_err_q2 = 0.0;
  bool satisfied_q1 = false;
  bool satisfied_q2 = false;
  bool satisfied() const { return satisfied_q1 && satisfied_q2; }
};

/// Absolute allowance for floating-point rounding in the observed <= bound
/// comparison (Q* itself comes from a linear solve).
inline constexpr double kBoundRoundoff = 1e-10;

/// epsilon = max(L1, L2); observed errors against Q* from policy iteration.
BoundReport verify_bounds(const QPair& pair, const TabularMDP& mdp, double beta,
                          TrackingVariant which);
BoundReport verify_bounds(const QPair& pair, const TabularMDP& mdp, double beta,
                          TrackingVariant which, const QTable& qstar);

}  // namespace gtt
