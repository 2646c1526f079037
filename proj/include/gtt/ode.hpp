#pragma once

// Continuous-time models of the tracking learners in the error coordinates
// x = [Q^A - Q*; Q^B - Q*], their upper and lower comparison systems, a
// fixed-step integrator and executable stability/monotonicity checks.

#include "gtt/envs.hpp"
#include "gtt/mdp.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gtt {

enum class FieldKind {
  agt2_original,
  agt2_upper,
  agt2_lower,
  sgt2_original,
  sgt2_upper,
  sgt2_lower,
};

std::string_view to_string(FieldKind kind);
bool is_agt2(FieldKind kind);

/// Model data shared by every field built from one (mdp, behavior, beta).
/// Columns of P that point at terminal states are zeroed so the fields agree
/// with the bootstrap indicator of the learners.
struct OdeModel {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  double beta = 0.0;
  Vector d;
  Matrix P;
  Vector qstar;
  Vector p_vstar;  // P max_a Q*(., a)
  PolicyMatrix optimal_policy{1, 1, {0}};

  OdeModel(const TabularMDP& mdp, const BehaviorDistribution& behavior,
           double beta);
  int n_pairs() const { return n_states * n_actions; }
  /// (P max_a y(., a))(s, a) with y action-major.
  Vector expected_max(const Vector& y) const;
};

class OdeField {
 public:
  using Evaluator = std::function<Vector(const Vector&)>;

  OdeField(FieldKind kind, std::shared_ptr<const OdeModel> model);
  /// Arbitrary field, for tests and scalar examples.
  OdeField(int dim, Evaluator eval, std::string name);

  Vector operator()(const Vector& x) const;
  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  std::optional<FieldKind> kind() const { return kind_; }
  const std::shared_ptr<const OdeModel>& model() const { return model_; }

  /// Global Lipschitz constant w.r.t. the inf-norm, assembled from d_max,
  /// gamma and beta. Throws for custom fields.
  double lipschitz_constant() const;

 private:
  int dim_;
  std::string name_;
  std::optional<FieldKind> kind_;
  std::shared_ptr<const OdeModel> model_;
  Evaluator eval_;
};

OdeField make_field(FieldKind kind, const TabularMDP& mdp,
                    const BehaviorDistribution& behavior, double beta);
OdeField make_field(FieldKind kind, std::shared_ptr<const OdeModel> model);

/// Limit field f_inf(x) = lim_{c->inf} f(c x) / c of an original field: the
/// switching linear part with the policy greedy in x itself.
Vector limit_field(const OdeField& original, const Vector& x);

enum class Integrator { euler, rk4 };

Integrator parse_integrator(std::string_view name);
std::string_view to_string(Integrator method);

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(double time, const std::string& what)
      : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

struct Trajectory {
  std::vector<double> times;
  Matrix states;  // one row per recorded time
  double dt = 0.0;
  Integrator method = Integrator::rk4;

  Vector final_state() const { return states.row(states.rows() - 1).transpose(); }
};

/// Fixed-step integration on the grid t_k = k dt, k = 0..round(t_end/dt).
/// Every `record_stride`-th point (and the last one) is stored.
Trajectory integrate(const OdeField& field, const Vector& x0, double dt,
                     double t_end, Integrator method = Integrator::rk4,
                     int record_stride = 1);

struct SandwichReport {
  bool passed = true;
  double max_violation = 0.0;  // largest lower - original or original - upper
  struct Violation {
    long step;
    double time;
    int component;
    std::string relation;  // "lower>original" or "original>upper"
  };
  std::optional<Violation> first_violation;
};

/// Checks lower <= original <= upper element-wise within `slack` at every
/// stored point. Mismatched grids throw; initial states that are not strictly
/// ordered give a failed report at step 0.
SandwichReport check_sandwich(const Trajectory& lower, const Trajectory& original,
                              const Trajectory& upper, double slack = 1e-6);

struct ProbeReport {
  long samples = 0;
  long violations = 0;
  double worst = 0.0;  // largest violation amount, or largest ratio for Lipschitz
};

/// Quasi-monotone increasing probe: f_i(x + delta) >= f_i(x) - tol for random
/// x in [-scale, scale]^n and delta >= 0 with delta_i = 0.
ProbeReport quasi_monotone_probe(const OdeField& field, long samples, Rng& rng,
                                 double scale = 10.0, double tol = 1e-12);

/// Lipschitz probe: counts pairs with ||f(x)-f(y)|| > L ||x-y|| (inf-norms);
/// `worst` is the largest observed ratio.
ProbeReport lipschitz_probe(const OdeField& field, double constant, long samples,
                            Rng& rng, double scale = 10.0);

/// True iff A_ii + sum_{j != i} |A_ij| < 0 for every row. Non-square throws.
bool row_dominating(const Matrix& A);

/// [-D, g^(1/2) D P Pi; g^(1/2) beta D, -beta D], the similarity-scaled
/// upper-system matrix of the asymmetric learner for policy `sigma`.
Matrix agt2_certificate_matrix(const Vector& d, const Matrix& P,
                               const PolicyMatrix& sigma, double beta,
                               double gamma);
/// [-(1+beta) D, g D P Pi1 + beta D; g D P Pi2 + beta D, -(1+beta) D].
Matrix sgt2_certificate_matrix(const Vector& d, const Matrix& P,
                               const PolicyMatrix& sigma1,
                               const PolicyMatrix& sigma2, double beta,
                               double gamma);

struct CertificateReport {
  long checked = 0;
  long failed = 0;
  bool certified() const { return failed == 0 && checked > 0; }
  /// Per-policy outcome in enumeration order (policy index, or pair index
  /// i * |Pi| + j for the symmetric learner).
  std::vector<bool> outcomes;
};

inline constexpr long kMaxCertificatePolicies = 1'000'000;

/// Enumerates every deterministic policy (pairs of policies for the
/// symmetric learner) and checks each certificate matrix. `gamma` is taken
/// as given so that invalid discounts can be injected.
CertificateReport certify(bool symmetric, const TabularMDP& mdp,
                          const BehaviorDistribution& behavior, double beta,
                          double gamma);

/// Header `t,comp_0,...,comp_{n-1}` then one row per stored time.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace gtt
