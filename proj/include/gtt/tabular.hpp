#pragma once

#include "gtt/envs.hpp"
#include "gtt/mdp.hpp"
#include "gtt/record.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

namespace gtt {

/// Online estimate `a` and target estimate `b`.
struct QPair {
  QTable a;
  QTable b;
};

/// alpha_k = value (constant) or numerator / (offset + k) (harmonic).
class StepSchedule {
 public:
  static StepSchedule constant(double alpha);
  static StepSchedule harmonic(double numerator, double offset);

  double operator()(long k) const;
  bool is_constant() const { return constant_; }
  double numerator() const { return numerator_; }
  double offset() const { return offset_; }

 private:
  StepSchedule(bool constant, double numerator, double offset);
  bool constant_;
  double numerator_;
  double offset_;
};

enum class TabularAlgorithm { q_learning, double_q, agt2, sgt2 };

TabularAlgorithm parse_tabular_algorithm(std::string_view name);
std::string_view to_string(TabularAlgorithm algo);

/// Transitions drawn i.i.d. from d(s,a) = p(s) b(a|s) and P.
struct IidSampling {};

/// Transitions collected by acting epsilon-greedily in an episodic env.
/// Epsilon decays linearly from `epsilon` to `epsilon_final` over
/// `decay_steps` (0 keeps it fixed).
struct EpisodicSampling {
  double epsilon = 0.1;
  double epsilon_final = 0.1;
  long decay_steps = 0;
};

struct LearnerConfig {
  TabularAlgorithm algorithm = TabularAlgorithm::agt2;
  double beta = 1.0;
  StepSchedule schedule = StepSchedule::harmonic(80.0, 200.0);
  std::variant<IidSampling, EpisodicSampling> sampling = IidSampling{};
  long total_steps = 0;
  long log_interval = 1000;
  std::uint64_t seed = 0;
  /// Start both tables from the same random draw instead of independent ones.
  bool equal_init = false;

  void validate() const;
};

void agt2_ql_step(QPair& pair, const Transition& t, double alpha, double beta,
                  double gamma);
void sgt2_ql_step(QPair& pair, const Transition& t, double alpha, double beta,
                  double gamma);
void q_learning_step(QTable& q, const Transition& t, double alpha, double gamma);
/// `coin` true updates table `a` (bootstrapping from `b`), false the reverse.
void double_q_learning_step(QPair& pair, const Transition& t, double alpha,
                            double gamma, bool coin);

/// Q-values the learner acts on and is judged by: Q^A for the tracking
/// learners, (Q^A + Q^B) / 2 for double Q-learning, the single table for
/// Q-learning (stored in both slots).
QTable acting_q(const QPair& pair, TabularAlgorithm algo);

struct TabularRun {
  ExperimentRecord record;
  QPair final;
};

/// I.i.d. run. Logs "err_a" and "err_b" = ||Q - Q*||_inf at step 0 and every
/// log_interval steps (and at the last step). Requires Assumption 2.
TabularRun run_learner(const LearnerConfig& config, const TabularMDP& mdp,
                       const BehaviorDistribution& behavior);

/// Episodic run over `total_steps` env steps. Logs "return" per finished
/// episode, and "err_a"/"err_b" against the model's Q* at the end.
TabularRun run_learner(const LearnerConfig& config, TabularEnv env);

}  // namespace gtt
