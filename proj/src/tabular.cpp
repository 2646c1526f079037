#include "gtt/tabular.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gtt {

StepSchedule::StepSchedule(bool constant, double numerator, double offset)
    : constant_(constant), numerator_(numerator), offset_(offset) {}

StepSchedule StepSchedule::constant(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("constant step size must lie in (0, 1]");
  return StepSchedule(true, alpha, 0.0);
}

StepSchedule StepSchedule::harmonic(double numerator, double offset) {
  if (!(numerator > 0.0 && offset > 0.0 && numerator <= offset))
    throw std::invalid_argument(
        "harmonic schedule a/(b+k) needs 0 < a <= b so that alpha_0 <= 1");
  return StepSchedule(false, numerator, offset);
}

double StepSchedule::operator()(long k) const {
  return constant_ ? numerator_ : numerator_ / (offset_ + static_cast<double>(k));
}

TabularAlgorithm parse_tabular_algorithm(std::string_view name) {
  if (name == "q_learning") return TabularAlgorithm::q_learning;
  if (name == "double_q") return TabularAlgorithm::double_q;
  if (name == "agt2") return TabularAlgorithm::agt2;
  if (name == "sgt2") return TabularAlgorithm::sgt2;
  throw std::invalid_argument("unknown tabular algorithm '" + std::string(name) +
                              "' (expected q_learning, double_q, agt2 or sgt2)");
}

std::string_view to_string(TabularAlgorithm algo) {
  switch (algo) {
    case TabularAlgorithm::q_learning: return "q_learning";
    case TabularAlgorithm::double_q: return "double_q";
    case TabularAlgorithm::agt2: return "agt2";
    case TabularAlgorithm::sgt2: return "sgt2";
  }
  return "?";
}

void LearnerConfig::validate() const {
  const bool tracking =
      algorithm == TabularAlgorithm::agt2 || algorithm == TabularAlgorithm::sgt2;
  if (tracking && !(beta > 0.0))
    throw std::invalid_argument("beta must be positive");
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (log_interval < 1) throw std::invalid_argument("log_interval must be >= 1");
  if (const auto* ep = std::get_if<EpisodicSampling>(&sampling)) {
    if (!(ep->epsilon >= 0.0 && ep->epsilon <= 1.0) ||
        !(ep->epsilon_final >= 0.0 && ep->epsilon_final <= 1.0))
      throw std::invalid_argument("epsilon must lie in [0, 1]");
    if (ep->decay_steps < 0) throw std::invalid_argument("decay_steps must be >= 0");
  }
}

namespace {

void check_transition(const QTable& q, const Transition& t) {
  if (t.s < 0 || t.s >= q.n_states || t.s_next < 0 || t.s_next >= q.n_states ||
      t.a < 0 || t.a >= q.n_actions)
    throw DimensionError("transition indices out of range for the Q-table");
}

void check_pair(const QPair& p) {
  if (p.a.n_states != p.b.n_states || p.a.n_actions != p.b.n_actions)
    throw DimensionError("Q^A and Q^B have different shapes");
}

double bootstrap(const QTable& q, const Transition& t, double gamma) {
  return t.done ? 0.0 : gamma * q.max_value(t.s_next);
}

}  // namespace

void agt2_ql_step(QPair& pair, const Transition& t, double alpha, double beta,
                  double gamma) {
  check_pair(pair);
  check_transition(pair.a, t);
  const double qa = pair.a(t.s, t.a);
  const double qb = pair.b(t.s, t.a);
  const double target = t.r + bootstrap(pair.b, t, gamma);
  pair.a(t.s, t.a) = qa + alpha * (target - qa);
  pair.b(t.s, t.a) = qb + alpha * beta * (qa - qb);
}

void sgt2_ql_step(QPair& pair, const Transition& t, double alpha, double beta,
                  double gamma) {
  check_pair(pair);
  check_transition(pair.a, t);
  const double qa = pair.a(t.s, t.a);
  const double qb = pair.b(t.s, t.a);
  const double target_a = t.r + bootstrap(pair.b, t, gamma);
  const double target_b = t.r + bootstrap(pair.a, t, gamma);
  pair.a(t.s, t.a) = qa + alpha * (target_a - qa + beta * (qb - qa));
  pair.b(t.s, t.a) = qb + alpha * (target_b - qb + beta * (qa - qb));
}

void q_learning_step(QTable& q, const Transition& t, double alpha, double gamma) {
  check_transition(q, t);
  const double cur = q(t.s, t.a);
  q(t.s, t.a) = cur + alpha * (t.r + bootstrap(q, t, gamma) - cur);
}

void double_q_learning_step(QPair& pair, const Transition& t, double alpha,
                            double gamma, bool coin) {
  check_pair(pair);
  check_transition(pair.a, t);
  QTable& upd = coin ? pair.a : pair.b;
  const QTable& other = coin ? pair.b : pair.a;
  const double boot = t.done ? 0.0 : gamma * other(t.s_next, upd.argmax(t.s_next));
  const double cur = upd(t.s, t.a);
  upd(t.s, t.a) = cur + alpha * (t.r + boot - cur);
}

QTable acting_q(const QPair& pair, TabularAlgorithm algo) {
  if (algo == TabularAlgorithm::double_q) {
    QTable q = pair.a;
    q.values = 0.5 * (pair.a.values + pair.b.values);
    return q;
  }
  return pair.a;
}

namespace {

QPair initial_pair(const TabularMDP& mdp, const LearnerConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int S = mdp.n_states(), A = mdp.n_actions();
  QPair p{QTable(S, A), QTable(S, A)};
  for (int i = 0; i < p.a.size(); ++i) p.a.values[i] = unif(rng);
  if (cfg.equal_init || cfg.algorithm == TabularAlgorithm::q_learning) {
    p.b = p.a;
  } else {
    for (int i = 0; i < p.b.size(); ++i) p.b.values[i] = unif(rng);
  }
  return p;
}

// Applies one update of the configured algorithm.
class Updater {
 public:
  Updater(const LearnerConfig& cfg, double gamma) : cfg_(cfg), gamma_(gamma) {}

  void operator()(QPair& p, const Transition& t, long k, Rng& rng) const {
    const double alpha = cfg_.schedule(k);
    switch (cfg_.algorithm) {
      case TabularAlgorithm::agt2: agt2_ql_step(p, t, alpha, cfg_.beta, gamma_); break;
      case TabularAlgorithm::sgt2: sgt2_ql_step(p, t, alpha, cfg_.beta, gamma_); break;
      case TabularAlgorithm::q_learning:
        q_learning_step(p.a, t, alpha, gamma_);
        p.b(t.s, t.a) = p.a(t.s, t.a);
        break;
      case TabularAlgorithm::double_q: {
        std::bernoulli_distribution coin(0.5);
        double_q_learning_step(p, t, alpha, gamma_, coin(rng));
        break;
      }
    }
  }

 private:
  const LearnerConfig& cfg_;
  double gamma_;
};

ExperimentRecord blank_record(const LearnerConfig& cfg) {
  ExperimentRecord r;
  r.algorithm = std::string(to_string(cfg.algorithm));
  r.hyper_name = "beta";
  r.hyper_value = cfg.beta;
  r.seed = cfg.seed;
  return r;
}

void log_errors(ExperimentRecord& rec, long k, const QPair& p, const QTable& qstar) {
  rec.add(k, "err_a", sup_distance(p.a, qstar));
  rec.add(k, "err_b", sup_distance(p.b, qstar));
}

bool pair_finite(const QPair& p, const Transition& t) {
  return std::isfinite(p.a(t.s, t.a)) && std::isfinite(p.b(t.s, t.a));
}

}  // namespace

TabularRun run_learner(const LearnerConfig& config, const TabularMDP& mdp,
                       const BehaviorDistribution& behavior) {
  config.validate();
  if (!std::holds_alternative<IidSampling>(config.sampling))
    throw std::invalid_argument("run_learner(mdp, behavior) needs i.i.d. sampling");
  if (behavior.n_states() != mdp.n_states() || behavior.n_actions() != mdp.n_actions())
    throw DimensionError("behavior distribution does not match the MDP");
  behavior.require_positive();

  const QTable qstar = optimal_q(mdp, 1e-10);
  Rng rng(config.seed);
  TabularRun run{blank_record(config), initial_pair(mdp, config, rng)};
  const Updater update(config, mdp.gamma());

  log_errors(run.record, 0, run.final, qstar);
  for (long k = 0; k < config.total_steps; ++k) {
    const Transition t = sample_iid(mdp, behavior, rng);
    update(run.final, t, k, rng);
    if (!pair_finite(run.final, t)) {
      run.record.diverged = true;
      log_errors(run.record, k + 1, run.final, qstar);
      return run;
    }
    if ((k + 1) % config.log_interval == 0 || k + 1 == config.total_steps)
      log_errors(run.record, k + 1, run.final, qstar);
  }
  return run;
}

TabularRun run_learner(const LearnerConfig& config, TabularEnv env) {
  config.validate();
  const auto* ep = std::get_if<EpisodicSampling>(&config.sampling);
  if (ep == nullptr)
    throw std::invalid_argument("run_learner(env) needs episodic sampling");

  const TabularMDP& mdp = env.model();
  const QTable qstar = optimal_q(mdp, 1e-10);
  Rng rng(config.seed);
  TabularRun run{blank_record(config), initial_pair(mdp, config, rng)};
  run.record.hyper_value = config.algorithm == TabularAlgorithm::agt2 ||
                                   config.algorithm == TabularAlgorithm::sgt2
                               ? config.beta
                               : 0.0;
  const Updater update(config, mdp.gamma());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, mdp.n_actions() - 1);

  auto epsilon_at = [&](long k) {
    if (ep->decay_steps == 0) return ep->epsilon;
    if (k >= ep->decay_steps) return ep->epsilon_final;
    const double frac = static_cast<double>(k) / static_cast<double>(ep->decay_steps);
    return ep->epsilon + frac * (ep->epsilon_final - ep->epsilon);
  };

  int s = env.reset(rng);
  double episode_return = 0.0;
  long episode = 0;
  for (long k = 0; k < config.total_steps; ++k) {
    int a;
    if (unif(rng) < epsilon_at(k)) {
      a = random_action(rng);
    } else if (config.algorithm == TabularAlgorithm::double_q) {
      a = acting_q(run.final, config.algorithm).argmax(s);
    } else {
      a = run.final.a.argmax(s);
    }
    const TabularStep st = env.step(a, rng);
    const Transition t{s, a, st.reward, st.s_next, st.terminal};
    update(run.final, t, k, rng);
    if (!pair_finite(run.final, t)) {
      run.record.diverged = true;
      break;
    }
    episode_return += st.reward;
    s = st.s_next;
    if (st.terminal || st.truncated) {
      run.record.add(episode++, "return", episode_return);
      episode_return = 0.0;
      s = env.reset(rng);
    }
  }
  log_errors(run.record, config.total_steps, run.final, qstar);
  return run;
}

}  // namespace gtt
