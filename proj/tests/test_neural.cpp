#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deep_fixtures.hpp"
#include "gtt/neural.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace gtt;
using fixtures::numeric_gradient;
using fixtures::random_batch;
using fixtures::relative_error;

TEST_CASE("zero network outputs zero") {
  const Mlp net({3, 5, 2});
  Matrix obs = Matrix::Random(3, 4);
  CHECK(net.forward(obs).isZero(0.0));
  CHECK(net.n_params() == 3 * 5 + 5 + 5 * 2 + 2);
}

TEST_CASE("forward shapes and dimension errors") {
  Rng rng(1);
  const Mlp net = Mlp::random({4, 8, 3}, rng);
  CHECK(net.forward(Vector(Vector::Ones(4))).size() == 3);
  CHECK(net.forward(Matrix(Matrix::Ones(4, 7))).cols() == 7);
  CHECK_THROWS_AS(net.forward(Vector(Vector::Ones(5))), DimensionError);
  CHECK_THROWS(Mlp({4}));
}

TEST_CASE("linear layer gradient equals the input") {
  Mlp net({3, 2}, false);
  Vector x(3);
  x << 0.5, -1.0, 2.0;
  Matrix g = Matrix::Zero(2, 1);
  g(1, 0) = 1.0;
  const MlpGradient grad = net.backward(x, g);
  CHECK(grad.weight[0].row(0).isZero(0.0));
  CHECK(grad.weight[0].row(1).transpose() == x);
}

TEST_CASE("backprop matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp net = Mlp::random({4, 6, 5, 3}, rng);
    for (auto& l : net.layers()) l.bias.setRandom();
    const Matrix obs = Matrix::Random(4, 5);
    const Matrix out_grad = Matrix::Random(3, 5);
    const Vector analytic = net.backward(obs, out_grad).flat();
    const Vector numeric = numeric_gradient(net, [&](const Mlp& m) {
      return (m.forward(obs).array() * out_grad.array()).sum();
    });
    CHECK(relative_error(analytic, numeric) < 1e-6);
  }
}

TEST_CASE("flat parameters round trip") {
  Rng rng(3);
  Mlp net = Mlp::random({2, 3, 2}, rng);
  const Vector theta = net.flat();
  CHECK(theta.size() == net.n_params());
  // weights row-major then bias
  CHECK(theta[1] == net.layers()[0].weight(0, 1));
  CHECK(theta[2] == net.layers()[0].weight(1, 0));
  Mlp copy({2, 3, 2});
  copy.set_flat(theta);
  CHECK(copy == net);
  CHECK_THROWS(copy.set_flat(Vector::Zero(3)));
}

TEST_CASE("dqn loss gradient") {
  SUBCASE("zero when predictions equal targets") {
    Mlp online({2, 2}, false);
    const Mlp target({2, 2}, false);  // zero net, y = r
    Batch b;
    b.obs = Matrix::Identity(2, 2);
    b.next_obs = Matrix::Identity(2, 2);
    b.actions = {0, 1};
    b.rewards = Vector(2);
    b.rewards << 0.3, -0.7;
    b.done = {0, 1};
    online.layers()[0].weight(0, 0) = 0.3;
    online.layers()[0].weight(1, 1) = -0.7;
    const LossGrad lg = dqn_loss_grad(online, target, b, 0.9);
    CHECK(lg.loss == 0.0);
    CHECK(lg.grad.flat().isZero(0.0));
  }
  SUBCASE("terminal targets are the reward") {
    Rng rng(2);
    const Mlp online({2, 2}, false);
    const Mlp target = Mlp::random({2, 2}, rng);
    Batch b = random_batch(2, 2, 1, rng);
    b.done = {1};
    b.actions = {0};
    // online is zero, so the loss is r^2 / 2
    CHECK(dqn_loss(online, target, b, 0.9) == doctest::Approx(0.5 * b.rewards[0] * b.rewards[0]));
  }
  SUBCASE("one sample, linear net, by hand") {
    Mlp online({2, 2}, false), target({2, 2}, false);
    online.layers()[0].weight << 1.0, 2.0, 3.0, 4.0;
    target.layers()[0].weight << 0.5, 0.0, 0.0, 1.5;
    Batch b;
    b.obs = Vector(2);
    b.obs << 1.0, -1.0;
    b.next_obs = Vector(2);
    b.next_obs << 2.0, 1.0;
    b.actions = {1};
    b.rewards = Vector::Constant(1, 0.25);
    b.done = {0};
    // Q = 3 - 4 = -1; target outputs (1.0, 1.5), y = 0.25 + 0.9 * 1.5 = 1.6
    const double q = -1.0, y = 1.6;
    const LossGrad lg = dqn_loss_grad(online, target, b, 0.9);
    CHECK(lg.loss == doctest::Approx(0.5 * (y - q) * (y - q)));
    Matrix expected = Matrix::Zero(2, 2);
    expected.row(1) = (q - y) * b.obs.col(0).transpose();
    CHECK((lg.grad.weight[0] - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("gradient ignores the target network") {
    Rng rng(5);
    const Mlp online = Mlp::random({3, 4, 2}, rng);
    const Mlp target = Mlp::random({3, 4, 2}, rng);
    const Batch b = random_batch(3, 2, 8, rng);
    const LossGrad lg = dqn_loss_grad(online, target, b, 0.9);
    const Vector numeric = numeric_gradient(
        online, [&](const Mlp& m) { return dqn_loss(m, target, b, 0.9); });
    CHECK(relative_error(lg.grad.flat(), numeric) < 1e-4);
  }
  SUBCASE("empty batch") {
    const Mlp net({2, 2});
    Batch b;
    b.obs = Matrix(2, 0);
    b.next_obs = Matrix(2, 0);
    CHECK_THROWS(dqn_loss_grad(net, net, b, 0.9));
  }
}

TEST_CASE("tracking loss gradients match finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Mlp online = Mlp::random({3, 6, 2}, rng);
    const Mlp target = Mlp::random({3, 6, 2}, rng);
    const Batch b = random_batch(3, 2, 6, rng);
    const double beta = 0.7, g = 0.95;
    const PairLossGrad a = agt2_loss_grad(online, target, b, beta, g);
    CHECK(relative_error(a.grad1.flat(),
                         numeric_gradient(online, [&](const Mlp& m) {
                           return agt2_loss_grad(m, target, b, beta, g).loss1;
                         })) < 1e-4);
    CHECK(relative_error(a.grad2.flat(),
                         numeric_gradient(target, [&](const Mlp& m) {
                           return agt2_loss_grad(online, m, b, beta, g).loss2;
                         })) < 1e-4);
    const PairLossGrad s = sgt2_loss_grad(online, target, b, beta, g);
    CHECK(relative_error(s.grad1.flat(),
                         numeric_gradient(online, [&](const Mlp& m) {
                           return sgt2_loss_grad(m, target, b, beta, g).loss1;
                         })) < 1e-4);
    CHECK(relative_error(s.grad2.flat(),
                         numeric_gradient(target, [&](const Mlp& m) {
                           return sgt2_loss_grad(online, m, b, beta, g).loss2;
                         })) < 1e-4);
  }
}

TEST_CASE("asymmetric step with identical nets leaves the target alone") {
  Rng rng(4);
  const Mlp net = Mlp::random({3, 5, 2}, rng);
  NetPair pair{net, net};
  const Batch b = random_batch(3, 2, 8, rng);
  const PairLossGrad lg = agt2_dqn_step(pair, b, 0.01, 2.0, 0.9);
  CHECK(lg.loss2 == 0.0);
  CHECK(lg.grad2.flat().isZero(0.0));
  CHECK(pair.target == net);
  CHECK_FALSE(pair.online == net);
}

TEST_CASE("symmetric step with identical nets stays symmetric") {
  Rng rng(6);
  const Mlp net = Mlp::random({3, 5, 2}, rng);
  NetPair pair{net, net};
  const Batch b = random_batch(3, 2, 8, rng);
  sgt2_dqn_step(pair, b, 0.01, 1.0, 0.9);
  CHECK(pair.online == pair.target);
}

TEST_CASE("one-hot linear nets reproduce the tabular updates") {
  Rng rng(13);
  for (bool symmetric : {false, true}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto f = fixtures::one_hot_fixture(3, 2, 5, rng);
      NetPair nets{fixtures::table_net(f.pair.a), fixtures::table_net(f.pair.b)};
      const double alpha = 0.3, beta = 1.5, g = 0.9;
      if (symmetric)
        sgt2_dqn_step(nets, f.batch, alpha, beta, g);
      else
        agt2_dqn_step(nets, f.batch, alpha, beta, g);
      const QPair oracle = fixtures::tabular_batch_oracle(f, alpha, beta, g, symmetric);
      CHECK(sup_distance(fixtures::net_table(nets.online), oracle.a) < 1e-12);
      CHECK(sup_distance(fixtures::net_table(nets.target), oracle.b) < 1e-12);
    }
  }
}

TEST_CASE("checkpoints") {
  Rng rng(8);
  Mlp net = Mlp::random({4, 3, 2}, rng);
  net.layers()[0].bias.setRandom();
  std::stringstream ss;
  save_checkpoint(ss, net);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 4 + 3 * 4 + 4 + 8 * static_cast<std::size_t>(net.n_params()));
  // little-endian u32 layer count first
  CHECK(bytes[0] == 3);
  CHECK(bytes[1] == 0);
  CHECK(bytes[4] == 4);
  const Mlp back = load_checkpoint(ss);
  CHECK(back == net);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(load_checkpoint(truncated));
  std::string bad = bytes;
  bad[0] = 1;  // one size is not a network
  std::stringstream bad_ss(bad);
  CHECK_THROWS(load_checkpoint(bad_ss));

  Mlp nobias = Mlp::random({2, 2}, rng, false);
  std::stringstream s2;
  save_checkpoint(s2, nobias);
  CHECK(load_checkpoint(s2) == nobias);
}

TEST_CASE("replay buffer") {
  ReplayBuffer buf(5, 2);
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample(1, rng), std::logic_error);
  for (int i = 0; i < 8; ++i)
    buf.push(Vector::Constant(2, i), i, i, Vector::Constant(2, i + 1), i == 7);
  CHECK(buf.size() == 5);
  CHECK(buf.capacity() == 5);
  const Batch b = buf.sample(5, rng);
  std::set<int> seen(b.actions.begin(), b.actions.end());
  CHECK(seen == std::set<int>{3, 4, 5, 6, 7});  // oldest three overwritten
  for (int i = 0; i < 5; ++i) {
    CHECK(b.obs(0, i) == b.actions[i]);
    CHECK(b.rewards[i] == b.actions[i]);
    CHECK(b.next_obs(1, i) == b.actions[i] + 1);
    CHECK((b.done[i] == 1) == (b.actions[i] == 7));
  }
  CHECK_THROWS(buf.sample(6, rng));
  CHECK_THROWS_AS(buf.push(Vector::Zero(3), 0, 0, Vector::Zero(3), false), DimensionError);
}

TEST_CASE("sgd with momentum") {
  Mlp net({1, 1}, false);
  MlpGradient g = MlpGradient::zeros_like(net);
  g.weight[0](0, 0) = 1.0;
  SgdOptimizer opt(net, 0.1, 0.5);
  opt.step(net, g);  // v = 1
  CHECK(net.layers()[0].weight(0, 0) == doctest::Approx(-0.1));
  opt.step(net, g);  // v = 1.5
  CHECK(net.layers()[0].weight(0, 0) == doctest::Approx(-0.25));
}

TEST_CASE("deep config") {
  DeepConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.epsilon_at(0) == 1.0);
  CHECK(cfg.epsilon_at(2500) == doctest::Approx(0.525));
  CHECK(cfg.epsilon_at(10000) == 0.05);
  DeepConfig bad = cfg;
  bad.update_period = 0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.beta = 0.0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.alpha = -1.0;
  CHECK_THROWS(bad.validate());
  CHECK(parse_deep_algorithm("sgt2_dqn") == DeepAlgorithm::sgt2_dqn);
  CHECK(to_string(DeepAlgorithm::agt2_dqn) == "agt2_dqn");
  CHECK_THROWS(parse_deep_algorithm("ddqn"));
}

TEST_CASE("training is deterministic in the seed") {
  DeepConfig cfg;
  cfg.hidden = {16};
  cfg.batch_size = 8;
  cfg.buffer_capacity = 200;
  cfg.max_env_steps = 600;
  cfg.epsilon_decay_steps = 300;
  cfg.seed = 3;
  for (DeepAlgorithm algo :
       {DeepAlgorithm::dqn, DeepAlgorithm::agt2_dqn, DeepAlgorithm::sgt2_dqn}) {
    CartPole e1(1), e2(1);
    const DeepRun a = train(algo, e1, cfg);
    const DeepRun b = train(algo, e2, cfg);
    CHECK(a.nets.online == b.nets.online);
    CHECK(a.nets.target == b.nets.target);
    CHECK(a.record.series("return") == b.record.series("return"));
    CHECK(a.env_steps == 600);
    CHECK(a.gradient_steps == 600 - cfg.batch_size + 1);
  }
}

TEST_CASE("dqn hard copies on the period") {
  DeepConfig cfg;
  cfg.hidden = {8};
  cfg.batch_size = 4;
  cfg.buffer_capacity = 100;
  cfg.max_env_steps = 4 + 9;  // 10 gradient steps
  cfg.update_period = 5;
  CartPole env(2);
  const DeepRun run = train(DeepAlgorithm::dqn, env, cfg);
  CHECK(run.gradient_steps == 10);
  CHECK(run.nets.online == run.nets.target);
  cfg.max_env_steps = 4 + 10;  // one step past the copy
  CartPole env2(2);
  const DeepRun later = train(DeepAlgorithm::dqn, env2, cfg);
  CHECK_FALSE(later.nets.online == later.nets.target);
}

TEST_CASE("uniform random acting matches the random baseline") {
  DeepConfig cfg;
  cfg.hidden = {8};
  cfg.epsilon_start = cfg.epsilon_end = 1.0;
  cfg.alpha = 1e-6;
  cfg.episodes = 300;
  cfg.batch_size = 16;
  cfg.seed = 5;
  CartPole env(10);
  const DeepRun run = train(DeepAlgorithm::dqn, env, cfg);
  const auto returns = run.record.series("return");
  REQUIRE(returns.size() == 300);
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= returns.size();

  // Independent baseline: coin-flip actions on a separate env instance.
  CartPole base(99);
  Rng coin(77);
  double base_mean = 0.0;
  const int n = 2000;
  for (int ep = 0; ep < n; ++ep) {
    base.reset();
    double ret = 0.0;
    for (bool over = false; !over;) {
      const VectorStep st = base.step(static_cast<int>(coin() % 2));
      ret += st.reward;
      over = st.terminal || st.truncated;
    }
    base_mean += ret;
  }
  base_mean /= n;
  CHECK(std::abs(mean - base_mean) < 3.0);
}
