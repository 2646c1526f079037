#include "gtt/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "gtt/record.hpp"

namespace gtt {

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::agt2_original: return "agt2_original";
    case FieldKind::agt2_upper: return "agt2_upper";
    case FieldKind::agt2_lower: return "agt2_lower";
    case FieldKind::sgt2_original: return "sgt2_original";
    case FieldKind::sgt2_upper: return "sgt2_upper";
    case FieldKind::sgt2_lower: return "sgt2_lower";
  }
  return "?";
}

bool is_agt2(FieldKind kind) {
  return kind == FieldKind::agt2_original || kind == FieldKind::agt2_upper ||
         kind == FieldKind::agt2_lower;
}

namespace {

StateActionMatrices masked_matrices(const TabularMDP& mdp,
                                    const BehaviorDistribution& behavior) {
  StateActionMatrices m = state_action_matrices(mdp, behavior);
  for (int s = 0; s < mdp.n_states(); ++s)
    if (mdp.terminal(s)) m.P.col(s).setZero();
  return m;
}

Vector row_max(const Vector& y, int S, int A) {
  Vector m(S);
  for (int s = 0; s < S; ++s) {
    double best = y[s];
    for (int a = 1; a < A; ++a) best = std::max(best, y[a * S + s]);
    m[s] = best;
  }
  return m;
}

}  // namespace

OdeModel::OdeModel(const TabularMDP& mdp, const BehaviorDistribution& behavior,
                   double beta_)
    : n_states(mdp.n_states()),
      n_actions(mdp.n_actions()),
      gamma(mdp.gamma()),
      beta(beta_) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const StateActionMatrices m = masked_matrices(mdp, behavior);
  d = m.d;
  P = m.P;
  // Policy iteration solves the Bellman equation directly, so x = 0 is an
  // equilibrium up to the linear solve's rounding.
  qstar = policy_iteration_q(mdp).values;
  optimal_policy = greedy_policy(qstar, n_states, n_actions);
  p_vstar = expected_max(qstar);
}

Vector OdeModel::expected_max(const Vector& y) const {
  return P * row_max(y, n_states, n_actions);
}

namespace {

OdeField::Evaluator build_evaluator(FieldKind kind,
                                    std::shared_ptr<const OdeModel> mp) {
  const int n = mp->n_pairs();
  switch (kind) {
    case FieldKind::agt2_original:
      return [mp, n](const Vector& x) {
        const OdeModel& m = *mp;
        const Vector x1 = x.head(n), x2 = x.tail(n);
        Vector out(2 * n);
        out.head(n) = m.d.cwiseProduct(
            -x1 + m.gamma * (m.expected_max(x2 + m.qstar) - m.p_vstar));
        out.tail(n) = m.beta * m.d.cwiseProduct(x1 - x2);
        return out;
      };
    case FieldKind::agt2_upper:
      return [mp, n](const Vector& x) {
        const OdeModel& m = *mp;
        const Vector x1 = x.head(n), x2 = x.tail(n);
        Vector out(2 * n);
        out.head(n) = m.d.cwiseProduct(-x1 + m.gamma * m.expected_max(x2));
        out.tail(n) = m.beta * m.d.cwiseProduct(x1 - x2);
        return out;
      };
    case FieldKind::agt2_lower:
      return [mp, n](const Vector& x) {
        const OdeModel& m = *mp;
        const Vector x1 = x.head(n), x2 = x.tail(n);
        Vector out(2 * n);
        out.head(n) = m.d.cwiseProduct(
            -x1 + m.gamma * (m.P * m.optimal_policy.select(x2)));
        out.tail(n) = m.beta * m.d.cwiseProduct(x1 - x2);
        return out;
      };
    case FieldKind::sgt2_original:
      return [mp, n](const Vector& x) {
        const OdeModel& m = *mp;
        const Vector x1 = x.head(n), x2 = x.tail(n);
        Vector out(2 * n);
        out.head(n) = m.d.cwiseProduct(-(1.0 + m.beta) * x1 + m.beta * x2 +
                                       m.gamma * (m.expected_max(x2 + m.qstar) - m.p_vstar));
        out.tail(n) = m.d.cwiseProduct(-(1.0 + m.beta) * x2 + m.beta * x1 +
                                       m.gamma * (m.expected_max(x1 + m.qstar) - m.p_vstar));
        return out;
      };
    case FieldKind::sgt2_upper:
      return [mp, n](const Vector& x) {
        const OdeModel& m = *mp;
        const Vector x1 = x.head(n), x2 = x.tail(n);
        Vector out(2 * n);
        out.head(n) = m.d.cwiseProduct(-(1.0 + m.beta) * x1 + m.beta * x2 +
                                       m.gamma * m.expected_max(x2));
        out.tail(n) = m.d.cwiseProduct(-(1.0 + m.beta) * x2 + m.beta * x1 +
                                       m.gamma * m.expected_max(x1));
        return out;
      };
    case FieldKind::sgt2_lower:
      return [mp, n](const Vector& x) {
        const OdeModel& m = *mp;
        const Vector x1 = x.head(n), x2 = x.tail(n);
        Vector out(2 * n);
        out.head(n) = m.d.cwiseProduct(-(1.0 + m.beta) * x1 + m.beta * x2 +
                                       m.gamma * (m.P * m.optimal_policy.select(x2)));
        out.tail(n) = m.d.cwiseProduct(-(1.0 + m.beta) * x2 + m.beta * x1 +
                                       m.gamma * (m.P * m.optimal_policy.select(x1)));
        return out;
      };
  }
  throw std::invalid_argument("unknown field kind");
}

}  // namespace

OdeField::OdeField(FieldKind kind, std::shared_ptr<const OdeModel> model)
    : dim_(2 * model->n_pairs()),
      name_(to_string(kind)),
      kind_(kind),
      model_(model),
      eval_(build_evaluator(kind, std::move(model))) {}

OdeField::OdeField(int dim, Evaluator eval, std::string name)
    : dim_(dim), name_(std::move(name)), eval_(std::move(eval)) {
  if (dim_ < 1) throw DimensionError("field dimension must be >= 1");
}

Vector OdeField::operator()(const Vector& x) const {
  if (x.size() != dim_)
    throw DimensionError(name_ + ": state has length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(dim_));
  return eval_(x);
}

double OdeField::lipschitz_constant() const {
  if (!kind_ || !model_)
    throw std::logic_error("Lipschitz constant is only assembled for model fields");
  const double dmax = model_->d.maxCoeff();
  const double g = model_->gamma, b = model_->beta;
  switch (*kind_) {
    case FieldKind::agt2_original:
    case FieldKind::agt2_upper:
      return std::max(dmax, 2.0 * b * dmax) + g * dmax;
    case FieldKind::agt2_lower:
      return std::max((1.0 + g) * dmax, 2.0 * b * dmax);
    case FieldKind::sgt2_original:
    case FieldKind::sgt2_upper:
      return (1.0 + 2.0 * b) * dmax + 2.0 * g * dmax;
    case FieldKind::sgt2_lower:
      return (1.0 + 2.0 * b + g) * dmax;
  }
  return 0.0;
}

OdeField make_field(FieldKind kind, const TabularMDP& mdp,
                    const BehaviorDistribution& behavior, double beta) {
  return OdeField(kind, std::make_shared<const OdeModel>(mdp, behavior, beta));
}

OdeField make_field(FieldKind kind, std::shared_ptr<const OdeModel> model) {
  return OdeField(kind, std::move(model));
}

Vector limit_field(const OdeField& original, const Vector& x) {
  const auto kind = original.kind();
  if (kind == FieldKind::agt2_original)
    return make_field(FieldKind::agt2_upper, original.model())(x);
  if (kind == FieldKind::sgt2_original)
    return make_field(FieldKind::sgt2_upper, original.model())(x);
  throw std::invalid_argument("limit_field needs an original (non-comparison) field");
}

Integrator parse_integrator(std::string_view name) {
  if (name == "euler") return Integrator::euler;
  if (name == "rk4") return Integrator::rk4;
  throw std::invalid_argument("unknown integrator '" + std::string(name) +
                              "' (expected euler or rk4)");
}

std::string_view to_string(Integrator method) {
  return method == Integrator::euler ? "euler" : "rk4";
}

Trajectory integrate(const OdeField& field, const Vector& x0, double dt,
                     double t_end, Integrator method, int record_stride) {
  if (!(dt > 0.0) || !(t_end > 0.0))
    throw std::invalid_argument("integrate needs dt > 0 and t_end > 0");
  if (record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
  if (x0.size() != field.dim()) throw DimensionError("initial state has wrong length");
  const long steps = std::max(1L, std::lround(t_end / dt));
  const long stored = steps / record_stride + 1 + (steps % record_stride != 0);

  Trajectory traj;
  traj.dt = dt;
  traj.method = method;
  traj.times.reserve(stored);
  traj.states.resize(stored, field.dim());
  long row = 0;
  auto store = [&](long k, const Vector& x) {
    traj.times.push_back(static_cast<double>(k) * dt);
    traj.states.row(row++) = x.transpose();
  };

  Vector x = x0;
  store(0, x);
  for (long k = 0; k < steps; ++k) {
    if (method == Integrator::euler) {
      x += dt * field(x);
    } else {
      const Vector k1 = field(x);
      const Vector k2 = field(x + 0.5 * dt * k1);
      const Vector k3 = field(x + 0.5 * dt * k2);
      const Vector k4 = field(x + dt * k3);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!x.allFinite()) {
      const double t = static_cast<double>(k + 1) * dt;
      throw IntegrationError(t, field.name() + ": state became non-finite at t = " +
                                    std::to_string(t));
    }
    if ((k + 1) % record_stride == 0 || k + 1 == steps) store(k + 1, x);
  }
  return traj;
}

SandwichReport check_sandwich(const Trajectory& lower, const Trajectory& original,
                              const Trajectory& upper, double slack) {
  if (lower.times != original.times || upper.times != original.times)
    throw std::invalid_argument("check_sandwich: trajectories use different time grids");
  if (lower.states.cols() != original.states.cols() ||
      upper.states.cols() != original.states.cols())
    throw DimensionError("check_sandwich: trajectories have different dimensions");

  SandwichReport rep;
  auto flag = [&](long step, int i, const char* relation) {
    rep.passed = false;
    if (!rep.first_violation)
      rep.first_violation = SandwichReport::Violation{step, original.times[step], i, relation};
  };
  const int n = static_cast<int>(original.states.cols());
  for (int i = 0; i < n; ++i) {
    if (!(lower.states(0, i) < original.states(0, i))) flag(0, i, "lower>original");
    else if (!(original.states(0, i) < upper.states(0, i))) flag(0, i, "original>upper");
  }
  for (long k = 0; k < static_cast<long>(original.times.size()); ++k) {
    for (int i = 0; i < n; ++i) {
      const double below = lower.states(k, i) - original.states(k, i);
      const double above = original.states(k, i) - upper.states(k, i);
      rep.max_violation = std::max({rep.max_violation, below, above});
      if (below > slack) flag(k, i, "lower>original");
      if (above > slack) flag(k, i, "original>upper");
    }
  }
  return rep;
}

ProbeReport quasi_monotone_probe(const OdeField& field, long samples, Rng& rng,
                                 double scale, double tol) {
  if (samples < 1) throw std::invalid_argument("probe needs at least one sample");
  const int n = field.dim();
  std::uniform_real_distribution<double> coord(-scale, scale);
  std::uniform_real_distribution<double> step(0.0, scale);
  std::uniform_int_distribution<int> pick(0, n - 1);
  ProbeReport rep;
  for (long k = 0; k < samples; ++k) {
    Vector x(n), delta(n);
    for (int j = 0; j < n; ++j) {
      x[j] = coord(rng);
      delta[j] = step(rng);
    }
    const int i = pick(rng);
    delta[i] = 0.0;
    const double drop = field(x)[i] - field(x + delta)[i];
    ++rep.samples;
    if (drop > tol) {
      ++rep.violations;
      rep.worst = std::max(rep.worst, drop);
    }
  }
  return rep;
}

ProbeReport lipschitz_probe(const OdeField& field, double constant, long samples,
                            Rng& rng, double scale) {
  if (samples < 1) throw std::invalid_argument("probe needs at least one sample");
  const int n = field.dim();
  std::uniform_real_distribution<double> coord(-scale, scale);
  ProbeReport rep;
  for (long k = 0; k < samples; ++k) {
    Vector x(n), y(n);
    // Alternate far pairs with near pairs so policy switches are crossed at
    // both scales.
    const double spread = (k % 2 == 0) ? 1.0 : 1e-3;
    for (int j = 0; j < n; ++j) {
      x[j] = coord(rng);
      y[j] = x[j] + spread * coord(rng);
    }
    const double dx = (x - y).lpNorm<Eigen::Infinity>();
    if (dx == 0.0) continue;
    const double ratio = (field(x) - field(y)).lpNorm<Eigen::Infinity>() / dx;
    ++rep.samples;
    rep.worst = std::max(rep.worst, ratio);
    if (ratio > constant * (1.0 + 1e-12)) ++rep.violations;
  }
  return rep;
}

bool row_dominating(const Matrix& A) {
  if (A.rows() != A.cols()) throw DimensionError("row_dominating needs a square matrix");
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double off = A.row(i).cwiseAbs().sum() - std::abs(A(i, i));
    if (!(A(i, i) + off < 0.0)) return false;
  }
  return true;
}

Matrix agt2_certificate_matrix(const Vector& d, const Matrix& P,
                               const PolicyMatrix& sigma, double beta,
                               double gamma) {
  const Eigen::Index n = d.size();
  if (P.rows() != n || sigma.n_states() * sigma.n_actions() != n)
    throw DimensionError("certificate matrix: inconsistent sizes");
  const double root = std::sqrt(gamma);
  const Matrix DP = d.asDiagonal() * P;
  Matrix A = Matrix::Zero(2 * n, 2 * n);
  A.topLeftCorner(n, n) = -Matrix(d.asDiagonal());
  A.topRightCorner(n, n) = root * DP * sigma.dense();
  A.bottomLeftCorner(n, n) = root * beta * Matrix(d.asDiagonal());
  A.bottomRightCorner(n, n) = -beta * Matrix(d.asDiagonal());
  return A;
}

Matrix sgt2_certificate_matrix(const Vector& d, const Matrix& P,
                               const PolicyMatrix& sigma1,
                               const PolicyMatrix& sigma2, double beta,
                               double gamma) {
  const Eigen::Index n = d.size();
  if (P.rows() != n || sigma1.n_states() * sigma1.n_actions() != n ||
      sigma2.n_states() * sigma2.n_actions() != n)
    throw DimensionError("certificate matrix: inconsistent sizes");
  const Matrix D = d.asDiagonal();
  const Matrix DP = D * P;
  Matrix A(2 * n, 2 * n);
  A.topLeftCorner(n, n) = -(1.0 + beta) * D;
  A.topRightCorner(n, n) = gamma * DP * sigma1.dense() + beta * D;
  A.bottomLeftCorner(n, n) = gamma * DP * sigma2.dense() + beta * D;
  A.bottomRightCorner(n, n) = -(1.0 + beta) * D;
  return A;
}

CertificateReport certify(bool symmetric, const TabularMDP& mdp,
                          const BehaviorDistribution& behavior, double beta,
                          double gamma) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  double count = std::pow(static_cast<double>(mdp.n_actions()), mdp.n_states());
  if (symmetric) count *= count;
  if (count > static_cast<double>(kMaxCertificatePolicies))
    throw std::invalid_argument(
        "certify: " + std::to_string(count) + " policies exceed the enumeration limit of " +
        std::to_string(kMaxCertificatePolicies) + "; use a smaller model");
  const StateActionMatrices m = masked_matrices(mdp, behavior);
  const auto policies = all_deterministic_policies(mdp.n_states(), mdp.n_actions());

  CertificateReport rep;
  auto record = [&](bool ok) {
    ++rep.checked;
    if (!ok) ++rep.failed;
    rep.outcomes.push_back(ok);
  };
  if (!symmetric) {
    for (const auto& sigma : policies)
      record(row_dominating(agt2_certificate_matrix(m.d, m.P, sigma, beta, gamma)));
  } else {
    for (const auto& s1 : policies)
      for (const auto& s2 : policies)
        record(row_dominating(sgt2_certificate_matrix(m.d, m.P, s1, s2, beta, gamma)));
  }
  return rep;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << 't';
  for (Eigen::Index i = 0; i < traj.states.cols(); ++i) out << ",comp_" << i;
  out << '\n';
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    out << format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < traj.states.cols(); ++i)
      out << ',' << format_double(traj.states(static_cast<Eigen::Index>(k), i));
    out << '\n';
  }
}

}  // namespace gtt
