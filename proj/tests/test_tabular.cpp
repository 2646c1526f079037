#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gtt/tabular.hpp"

#include <cmath>

using namespace gtt;

namespace {

// Two states, two actions; the update always touches (0, 0) and bootstraps
// from state 1.
QPair fixture_pair() {
  QPair p{QTable(2, 2), QTable(2, 2)};
  p.a(0, 0) = 1.0;
  p.b(0, 0) = 0.4;
  p.b(1, 0) = 2.0;
  p.b(1, 1) = 1.0;
  p.a(1, 0) = 1.5;
  p.a(1, 1) = 0.5;
  return p;
}

const Transition kStep{0, 0, 0.5, 1, false};

}  // namespace

TEST_CASE("step schedules") {
  const StepSchedule h = StepSchedule::harmonic(80, 200);
  CHECK(h(0) == doctest::Approx(0.4));
  CHECK(h(800) == doctest::Approx(0.08));
  CHECK(StepSchedule::constant(0.3)(12345) == 0.3);
  CHECK_THROWS(StepSchedule::constant(0.0));
  CHECK_THROWS(StepSchedule::constant(1.5));
  CHECK_THROWS(StepSchedule::harmonic(300, 200));  // alpha_0 > 1
  CHECK_THROWS(StepSchedule::harmonic(-1, 200));
}

TEST_CASE("agt2 step") {
  SUBCASE("hand-simulated fixture") {
    QPair p = fixture_pair();
    agt2_ql_step(p, kStep, 0.1, 2.0, 0.9);
    CHECK(p.a(0, 0) == doctest::Approx(1.13).epsilon(1e-14));
    CHECK(p.b(0, 0) == doctest::Approx(0.52).epsilon(1e-14));
  }
  SUBCASE("zeros") {
    QPair p{QTable(2, 2), QTable(2, 2)};
    agt2_ql_step(p, Transition{0, 1, 1.0, 1, false}, 0.5, 1.0, 0.9);
    CHECK(p.a(0, 1) == 0.5);
    CHECK(p.b(0, 1) == 0.0);
  }
  SUBCASE("terminal next state ignores the target") {
    QPair p{QTable(2, 2), QTable(2, 2, 100.0)};
    p.a(0, 0) = 0.0;
    agt2_ql_step(p, Transition{0, 0, 1.0, 1, true}, 1.0, 1.0, 0.9);
    CHECK(p.a(0, 0) == 1.0);
  }
  SUBCASE("only (s, a) changes") {
    QPair p = fixture_pair();
    const QPair before = p;
    agt2_ql_step(p, kStep, 0.1, 2.0, 0.9);
    for (int i = 1; i < 4; ++i) {
      CHECK(p.a.values[i] == before.a.values[i]);
      CHECK(p.b.values[i] == before.b.values[i]);
    }
  }
  SUBCASE("out of range transitions throw") {
    QPair p = fixture_pair();
    CHECK_THROWS_AS(agt2_ql_step(p, Transition{2, 0, 0.0, 0, false}, 0.1, 1, 0.9),
                    DimensionError);
    CHECK_THROWS_AS(agt2_ql_step(p, Transition{0, 0, 0.0, 5, false}, 0.1, 1, 0.9),
                    DimensionError);
  }
}

TEST_CASE("sgt2 step") {
  SUBCASE("hand-simulated fixture") {
    QPair p = fixture_pair();
    sgt2_ql_step(p, kStep, 0.1, 1.0, 0.9);
    CHECK(p.a(0, 0) == doctest::Approx(1.07).epsilon(1e-14));
    CHECK(p.b(0, 0) == doctest::Approx(0.605).epsilon(1e-14));
  }
  SUBCASE("equal tables stay equal and match q-learning") {
    QPair p = fixture_pair();
    p.b = p.a;
    QTable single = p.a;
    sgt2_ql_step(p, kStep, 0.2, 3.0, 0.9);
    q_learning_step(single, kStep, 0.2, 0.9);
    CHECK(p.a.values == p.b.values);
    CHECK(p.a.values == single.values);
  }
  SUBCASE("beta zero gives two cross-bootstrapped updates") {
    QPair p = fixture_pair();
    sgt2_ql_step(p, kStep, 0.1, 0.0, 0.9);
    CHECK(p.a(0, 0) == doctest::Approx(1.0 + 0.1 * (0.5 + 0.9 * 2.0 - 1.0)));
    CHECK(p.b(0, 0) == doctest::Approx(0.4 + 0.1 * (0.5 + 0.9 * 1.5 - 0.4)));
  }
}

TEST_CASE("q-learning and double q") {
  SUBCASE("watkins update") {
    QTable q(2, 2);
    q(1, 0) = 2.0;
    q(0, 0) = 1.0;
    q_learning_step(q, kStep, 0.5, 0.9);
    CHECK(q(0, 0) == doctest::Approx(1.0 + 0.5 * (0.5 + 1.8 - 1.0)));
  }
  SUBCASE("double q with equal tables matches q-learning for either coin") {
    for (bool coin : {true, false}) {
      QPair p = fixture_pair();
      p.b = p.a;
      QTable single = p.a;
      double_q_learning_step(p, kStep, 0.3, 0.9, coin);
      q_learning_step(single, kStep, 0.3, 0.9);
      const QTable& updated = coin ? p.a : p.b;
      CHECK(updated.values == single.values);
    }
  }
  SUBCASE("double q evaluates the argmax with the other table") {
    QPair p = fixture_pair();
    // argmax of a at s'=1 is action 0; b(1, 0) = 2.0
    double_q_learning_step(p, kStep, 0.1, 0.9, true);
    CHECK(p.a(0, 0) == doctest::Approx(1.0 + 0.1 * (0.5 + 0.9 * 2.0 - 1.0)));
    CHECK(p.b(0, 0) == 0.4);
    QPair r = fixture_pair();
    // argmax of b at s'=1 is action 0; a(1, 0) = 1.5
    double_q_learning_step(r, kStep, 0.1, 0.9, false);
    CHECK(r.b(0, 0) == doctest::Approx(0.4 + 0.1 * (0.5 + 0.9 * 1.5 - 0.4)));
    CHECK(r.a(0, 0) == 1.0);
  }
  SUBCASE("acting values") {
    const QPair p = fixture_pair();
    CHECK(acting_q(p, TabularAlgorithm::agt2).values == p.a.values);
    CHECK(acting_q(p, TabularAlgorithm::double_q).values == 0.5 * (p.a.values + p.b.values));
  }
}

TEST_CASE("algorithm names") {
  for (auto algo : {TabularAlgorithm::q_learning, TabularAlgorithm::double_q,
                    TabularAlgorithm::agt2, TabularAlgorithm::sgt2})
    CHECK(parse_tabular_algorithm(to_string(algo)) == algo);
  CHECK_THROWS(parse_tabular_algorithm("sarsa"));
}

TEST_CASE("i.i.d. runs") {
  const ExampleMdp ex = example_mdp();
  LearnerConfig cfg;
  cfg.algorithm = TabularAlgorithm::agt2;
  cfg.beta = 0.5;
  cfg.seed = 4;

  SUBCASE("zero steps logs only the initial error") {
    cfg.total_steps = 0;
    const TabularRun run = run_learner(cfg, ex.mdp, ex.behavior);
    CHECK(run.record.rows.size() == 2);
    CHECK(run.record.rows[0].index == 0);
    const QTable qstar = optimal_q(ex.mdp);
    CHECK(run.record.last("err_a") == sup_distance(run.final.a, qstar));
    CHECK((run.final.a.values.array() >= 0.0).all());
    CHECK((run.final.a.values.array() <= 1.0).all());
    CHECK(run.final.a.values != run.final.b.values);
  }
  SUBCASE("equal initialization") {
    cfg.total_steps = 0;
    cfg.equal_init = true;
    const TabularRun run = run_learner(cfg, ex.mdp, ex.behavior);
    CHECK(run.final.a.values == run.final.b.values);
  }
  SUBCASE("deterministic in the seed, logged on the grid") {
    cfg.total_steps = 2500;
    cfg.log_interval = 1000;
    const TabularRun a = run_learner(cfg, ex.mdp, ex.behavior);
    const TabularRun b = run_learner(cfg, ex.mdp, ex.behavior);
    CHECK(a.final.a.values == b.final.a.values);
    CHECK(a.final.b.values == b.final.b.values);
    std::vector<long> idx;
    for (const auto& row : a.record.rows)
      if (row.metric == "err_a") idx.push_back(row.index);
    CHECK(idx == std::vector<long>{0, 1000, 2000, 2500});
  }
  SUBCASE("non-positive beta is rejected") {
    cfg.beta = 0.0;
    CHECK_THROWS(run_learner(cfg, ex.mdp, ex.behavior));
  }
  SUBCASE("zero sampling mass surfaces at start") {
    Matrix b(2, 2);
    b << 1.0, 0.0, 0.5, 0.5;
    CHECK_THROWS_AS(run_learner(cfg, ex.mdp, BehaviorDistribution(Vector::Constant(2, 0.5), b)),
                    ExplorationError);
  }
  SUBCASE("gamma zero q-learning learns the reward table") {
    cfg.algorithm = TabularAlgorithm::q_learning;
    cfg.total_steps = 20000;
    const TabularMDP m0 = ex.mdp.with_gamma(0.0);
    const TabularRun run = run_learner(cfg, m0, ex.behavior);
    CHECK(run.record.last("err_a") < 1e-6);
  }
  SUBCASE("q-learning reaches the oracle on the example") {
    cfg.algorithm = TabularAlgorithm::q_learning;
    cfg.total_steps = 200000;
    const TabularRun run = run_learner(cfg, ex.mdp, ex.behavior);
    CHECK(run.record.last("err_a") < 0.05);
  }
}

TEST_CASE("sgt2 tables co-converge and stay bounded") {
  const ExampleMdp ex = example_mdp();
  LearnerConfig cfg;
  cfg.algorithm = TabularAlgorithm::sgt2;
  cfg.beta = 0.2;
  cfg.total_steps = 200000;
  cfg.seed = 9;
  const TabularRun run = run_learner(cfg, ex.mdp, ex.behavior);
  CHECK(sup_distance(run.final.a, run.final.b) < 0.05);
  for (double e : run.record.series("err_a")) CHECK(e < 100.0);
}

TEST_CASE("random 3x3 models: sgt2 converges") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const TabularMDP m = random_mdp(3, 3, 0.9, 100 + seed);
    LearnerConfig cfg;
    cfg.algorithm = TabularAlgorithm::sgt2;
    cfg.beta = 0.5;
    cfg.total_steps = 200000;
    cfg.seed = seed;
    const TabularRun run = run_learner(cfg, m, BehaviorDistribution::uniform(3, 3));
    CHECK(run.record.last("err_a") < 0.1);
    CHECK(run.record.last("err_b") < 0.1);
  }
}

TEST_CASE("episodic runs on grid worlds") {
  LearnerConfig cfg;
  cfg.algorithm = TabularAlgorithm::agt2;
  cfg.beta = 1.0;
  cfg.schedule = StepSchedule::constant(0.5);
  cfg.sampling = EpisodicSampling{1.0, 0.1, 50000};
  cfg.total_steps = 100000;
  cfg.seed = 1;
  TabularEnv env = gridworld(GridKind::cliffwalk);
  const TabularRun run = run_learner(cfg, env);
  const auto returns = run.record.series("return");
  CHECK(returns.size() > 10);
  for (double r : returns) CHECK(r <= -13.0 + 1e-12);
  // exact evaluation of the learned greedy policy equals the optimum
  const TabularMDP& m = env.model();
  const PolicyMatrix pi = greedy_policy(run.final.a);
  const QTable qpi = policy_evaluation_q(m, pi);
  CHECK(qpi(36, pi.action(36)) ==
        doctest::Approx(optimal_q(m).max_value(36)).epsilon(1e-9));

  LearnerConfig iid = cfg;
  iid.sampling = IidSampling{};
  CHECK_THROWS(run_learner(iid, env));
}
