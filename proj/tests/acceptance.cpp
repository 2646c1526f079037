// Acceptance checks. `acceptance --criterion N` runs one criterion, no
// arguments runs all nine. Each prints a single PASS/FAIL line; the exit
// status is nonzero if any selected criterion fails.

#include "deep_fixtures.hpp"
#include "gtt/analysis.hpp"
#include "gtt/ode.hpp"
#include "gtt/runner.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

using namespace gtt;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string config_path(const std::string& name) {
  return std::string(GTT_CONFIG_DIR) + "/" + name + ".ini";
}

std::vector<ExperimentRecord> run_config(const std::string& name) {
  return execute_experiment(load_experiment_config(config_path(name)));
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// --- 1 ---------------------------------------------------------------------

Verdict tabular_convergence() {
  std::map<std::string, std::map<double, double>> mean_err;  // algo -> beta -> mean
  double worst_agt2 = 0.0, worst_sgt2 = 0.0;
  int runs_over = 0, runs = 0;
  for (const std::string algo : {"agt2", "sgt2"}) {
    std::map<double, std::pair<double, int>> acc;
    for (const auto& r : run_config("tabular_" + algo)) {
      const double err = std::max(r.last("err_a"), r.last("err_b"));
      (algo == "agt2" ? worst_agt2 : worst_sgt2) =
          std::max(algo == "agt2" ? worst_agt2 : worst_sgt2, err);
      ++runs;
      if (!(err < 0.05)) ++runs_over;
      acc[r.hyper_value].first += err;
      acc[r.hyper_value].second += 1;
    }
    for (const auto& [beta, s] : acc) mean_err[algo][beta] = s.first / s.second;
  }
  // Larger beta converges faster: mean final error strictly decreasing.
  bool ordered = true;
  double prev = INFINITY;
  for (const auto& [beta, e] : mean_err["agt2"]) {
    ordered = ordered && e < prev;
    prev = e;
  }
  auto spread = [](const std::map<double, double>& m) {
    double lo = INFINITY, hi = 0.0;
    for (const auto& [b, e] : m) lo = std::min(lo, e), hi = std::max(hi, e);
    return hi / lo;
  };
  const double spread_agt2 = spread(mean_err["agt2"]);
  const double spread_sgt2 = spread(mean_err["sgt2"]);
  const bool less_sensitive = spread_sgt2 < spread_agt2;
  Verdict v;
  v.passed = runs_over == 0 && ordered && less_sensitive;
  v.detail = std::to_string(runs - runs_over) + "/" + std::to_string(runs) +
             " runs below 0.05 (worst agt2 " + fmt(worst_agt2) + ", worst sgt2 " +
             fmt(worst_sgt2) + "); agt2 ordering in beta " + (ordered ? "holds" : "broken") +
             "; max/min spread agt2 " + fmt(spread_agt2) + " vs sgt2 " + fmt(spread_sgt2);
  return v;
}

// --- 2 ---------------------------------------------------------------------

Verdict ode_sandwich() {
  int sandwiches = 0, stable = 0, total = 0;
  double worst_norm = 0.0;
  for (const std::string algo : {"agt2", "sgt2"}) {
    for (const auto& r : run_config("ode_sandwich_" + algo)) {
      ++total;
      if (r.last("sandwich_passed") == 1.0) ++sandwiches;
      const double n = std::max({r.last("final_norm_lower"), r.last("final_norm_original"),
                                 r.last("final_norm_upper")});
      worst_norm = std::max(worst_norm, n);
      if (n < 1e-6) ++stable;
    }
  }
  Verdict v;
  v.passed = sandwiches == total && stable == total;
  v.detail = "ordering held on " + std::to_string(sandwiches) + "/" + std::to_string(total) +
             " triples; final ||x||_inf < 1e-6 on " + std::to_string(stable) + "/" +
             std::to_string(total) + " (largest " + fmt(worst_norm) + ")";
  return v;
}

// --- 3 ---------------------------------------------------------------------

Verdict stability_certificates() {
  std::vector<std::pair<TabularMDP, BehaviorDistribution>> models;
  const ExampleMdp ex = example_mdp();
  models.emplace_back(ex.mdp, ex.behavior);
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    models.emplace_back(random_mdp(3, 2, 0.9, seed), BehaviorDistribution::uniform(3, 2));
  long checked = 0, certified = 0, injections = 0, rejected = 0;
  for (const auto& [mdp, beh] : models)
    for (bool sym : {false, true}) {
      for (double beta : {0.01, 1.0, 100.0}) {
        const CertificateReport rep = certify(sym, mdp, beh, beta, mdp.gamma());
        ++checked;
        if (rep.certified()) ++certified;
        for (double bad_gamma : {1.0, 1.5}) {
          ++injections;
          if (!certify(sym, mdp, beh, beta, bad_gamma).certified()) ++rejected;
        }
      }
    }
  Verdict v;
  v.passed = certified == checked && rejected == injections;
  v.detail = std::to_string(certified) + "/" + std::to_string(checked) +
             " model/beta/variant cases certified; " + std::to_string(rejected) + "/" +
             std::to_string(injections) + " gamma >= 1 injections rejected";
  return v;
}

// --- 4 ---------------------------------------------------------------------

Verdict probes() {
  const FieldKind kinds[] = {FieldKind::agt2_original, FieldKind::agt2_upper,
                             FieldKind::agt2_lower,    FieldKind::sgt2_original,
                             FieldKind::sgt2_upper,    FieldKind::sgt2_lower};
  const ExampleMdp ex = example_mdp();
  const TabularMDP rnd = random_mdp(3, 2, 0.95, 77);
  Rng rng(2024);
  long mono_bad = 0, lip_bad = 0, fields = 0;
  double worst_ratio = 0.0;
  for (const auto& [mdp, beh, beta] :
       {std::tuple{ex.mdp, ex.behavior, 0.2},
        std::tuple{rnd, BehaviorDistribution::uniform(3, 2), 5.0}}) {
    const auto model = std::make_shared<const OdeModel>(mdp, beh, beta);
    for (FieldKind k : kinds) {
      const OdeField f = make_field(k, model);
      ++fields;
      mono_bad += quasi_monotone_probe(f, 10000, rng).violations;
      const double L = f.lipschitz_constant();
      const ProbeReport lp = lipschitz_probe(f, L, 10000, rng);
      lip_bad += lp.violations;
      worst_ratio = std::max(worst_ratio, lp.worst / L);
    }
  }
  Verdict v;
  v.passed = mono_bad == 0 && lip_bad == 0;
  v.detail = std::to_string(fields) + " fields x 1e4 probes: " + std::to_string(mono_bad) +
             " monotonicity and " + std::to_string(lip_bad) +
             " Lipschitz violations; worst ratio/constant " + fmt(worst_ratio);
  return v;
}

// --- 5 ---------------------------------------------------------------------

Verdict bound_fuzz() {
  const BoundPair spot = theorem1_bound(0.01, 0.5, 0.9, 4);
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  const bool spot_ok = near(spot.q1, 5.6) && near(spot.q2, 7.6) &&
                       near(theorem2_bound(0.01, 0.5, 0.9, 4), 5.6);
  Rng rng(5);
  std::uniform_int_distribution<int> size(1, 4);
  std::uniform_real_distribution<double> gamma_dist(0.5, 0.99);
  std::uniform_real_distribution<double> log_beta(std::log(1e-2), std::log(1e2));
  long violations = 0, violations_q2_agt2 = 0;
  double worst_excess = 0.0;
  const long n = 1000;
  for (long k = 0; k < n; ++k) {
    const int S = size(rng), A = size(rng);
    const double gamma = gamma_dist(rng);
    const double beta = std::exp(log_beta(rng));
    const TabularMDP mdp = random_mdp(S, A, gamma, 10000 + static_cast<std::uint64_t>(k));
    const QTable qstar = policy_iteration_q(mdp);
    const QPair p = random_qpair(qstar, k, rng, 10.0);
    const TrackingVariant which = k % 2 == 0 ? TrackingVariant::agt2 : TrackingVariant::sgt2;
    const BoundReport r = verify_bounds(p, mdp, beta, which, qstar);
    if (!r.satisfied()) {
      ++violations;
      if (which == TrackingVariant::agt2 && !r.satisfied_q2) ++violations_q2_agt2;
      worst_excess = std::max({worst_excess, r.observed_err_q1 - r.bound_q1,
                               r.observed_err_q2 - r.bound_q2});
    }
  }
  Verdict v;
  v.passed = spot_ok && violations == 0;
  v.detail = std::string("spot values 5.6/7.6 ") + (spot_ok ? "match" : "DO NOT match") + "; " +
             std::to_string(violations) + "/" + std::to_string(n) + " fuzz cases violate (" +
             std::to_string(violations_q2_agt2) + " on the asymmetric Q2 bound)" +
             (violations ? ", worst excess " + fmt(worst_excess) : "");
  return v;
}

// --- 6 ---------------------------------------------------------------------

Verdict tabular_deep_equivalence() {
  Rng rng(6);
  std::uniform_int_distribution<int> states(2, 5), actions(2, 4), batch(1, 16);
  std::uniform_real_distribution<double> alpha(0.01, 1.0), beta(0.1, 5.0), gamma(0.0, 0.99);
  double worst = 0.0;
  int fixtures_run = 0;
  for (bool symmetric : {false, true}) {
    for (int k = 0; k < 100; ++k) {
      const auto f = fixtures::one_hot_fixture(states(rng), actions(rng), batch(rng), rng);
      const double a = alpha(rng), b = beta(rng), g = gamma(rng);
      NetPair nets{fixtures::table_net(f.pair.a), fixtures::table_net(f.pair.b)};
      if (symmetric)
        sgt2_dqn_step(nets, f.batch, a, b, g);
      else
        agt2_dqn_step(nets, f.batch, a, b, g);
      const QPair oracle = fixtures::tabular_batch_oracle(f, a, b, g, symmetric);
      worst = std::max({worst, sup_distance(fixtures::net_table(nets.online), oracle.a),
                        sup_distance(fixtures::net_table(nets.target), oracle.b)});
      ++fixtures_run;
    }
  }
  Verdict v;
  v.passed = worst <= 1e-12;
  v.detail = std::to_string(fixtures_run) + " fixtures (100 per step rule); worst deviation " +
             fmt(worst);
  return v;
}

// --- 7 ---------------------------------------------------------------------

Verdict gradient_checks() {
  Rng rng(7);
  std::uniform_int_distribution<int> dim(1, 5), width(2, 8), depth(0, 2), nact(2, 4),
      bsize(1, 10);
  std::uniform_real_distribution<double> beta_dist(0.1, 10.0), gamma_dist(0.0, 0.99);
  using LossFn = std::function<double(const Mlp&, const Mlp&, const Batch&, double, double)>;
  struct Loss {
    std::string name;
    bool wrt_online;
    std::function<Vector(const Mlp&, const Mlp&, const Batch&, double, double)> grad;
    LossFn value;
  };
  const std::vector<Loss> losses = {
      {"dqn", true,
       [](const Mlp& o, const Mlp& t, const Batch& b, double, double g) {
         return dqn_loss_grad(o, t, b, g).grad.flat();
       },
       [](const Mlp& o, const Mlp& t, const Batch& b, double, double g) {
         return dqn_loss(o, t, b, g);
       }},
      {"agt2_L1", true,
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return agt2_loss_grad(o, t, b, be, g).grad1.flat();
       },
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return agt2_loss_grad(o, t, b, be, g).loss1;
       }},
      {"agt2_L2", false,
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return agt2_loss_grad(o, t, b, be, g).grad2.flat();
       },
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return agt2_loss_grad(o, t, b, be, g).loss2;
       }},
      {"sgt2_L1", true,
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return sgt2_loss_grad(o, t, b, be, g).grad1.flat();
       },
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return sgt2_loss_grad(o, t, b, be, g).loss1;
       }},
      {"sgt2_L2", false,
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return sgt2_loss_grad(o, t, b, be, g).grad2.flat();
       },
       [](const Mlp& o, const Mlp& t, const Batch& b, double be, double g) {
         return sgt2_loss_grad(o, t, b, be, g).loss2;
       }},
  };
  double worst = 0.0;
  std::string worst_name;
  long failures = 0, checks = 0;
  for (const Loss& loss : losses) {
    for (int k = 0; k < 50; ++k) {
      std::vector<int> sizes{dim(rng)};
      for (int l = depth(rng); l > 0; --l) sizes.push_back(width(rng));
      sizes.push_back(nact(rng));
      Mlp online = Mlp::random(sizes, rng), target = Mlp::random(sizes, rng);
      for (auto& l : online.layers()) l.bias.setRandom();
      for (auto& l : target.layers()) l.bias.setRandom();
      const Batch b = fixtures::random_batch(sizes.front(), sizes.back(), bsize(rng), rng);
      const double be = beta_dist(rng), g = gamma_dist(rng);
      const Vector analytic = loss.grad(online, target, b, be, g);
      const Vector numeric =
          loss.wrt_online
              ? fixtures::numeric_gradient(
                    online, [&](const Mlp& m) { return loss.value(m, target, b, be, g); })
              : fixtures::numeric_gradient(
                    target, [&](const Mlp& m) { return loss.value(online, m, b, be, g); });
      const double err = fixtures::relative_error(analytic, numeric);
      ++checks;
      if (!(err < 1e-4)) ++failures;
      if (err > worst) worst = err, worst_name = loss.name;
    }
  }
  Verdict v;
  v.passed = failures == 0;
  v.detail = std::to_string(checks - failures) + "/" + std::to_string(checks) +
             " gradients within 1e-4 (5 losses x 50 fixtures); worst " + fmt(worst) + " (" +
             worst_name + ")";
  return v;
}

// --- 8 ---------------------------------------------------------------------

double final_mean(const ExperimentRecord& r, std::size_t window = 50) {
  const auto ret = r.series("return");
  if (ret.empty() || r.diverged) return -INFINITY;
  const std::size_t n = std::min(window, ret.size());
  double s = 0.0;
  for (std::size_t i = ret.size() - n; i < ret.size(); ++i) s += ret[i];
  return s / static_cast<double>(n);
}

Verdict deep_trends() {
  std::ostringstream detail;
  // (a) best C per seed lies in {1, 10}
  std::map<std::uint64_t, std::pair<double, double>> best;  // seed -> (score, C)
  for (const auto& r : run_config("cartpole_dqn")) {
    const double score = final_mean(r);
    auto [it, fresh] = best.try_emplace(r.seed, score, r.hyper_value);
    if (!fresh && score > it->second.first) it->second = {score, r.hyper_value};
  }
  int seeds_a = 0;
  detail << "best C per seed:";
  for (const auto& [seed, sc] : best) {
    detail << ' ' << sc.second << " (" << fmt(sc.first) << ")";
    if (sc.second == 1.0 || sc.second == 10.0) ++seeds_a;
  }
  const bool clause_a = seeds_a >= 2;

  // (b) some beta reaches a final-50 mean of 150 on at least 2 of 3 seeds
  bool clause_b = true;
  for (const std::string algo : {"agt2", "sgt2"}) {
    std::map<double, int> passing;
    std::map<double, std::vector<double>> scores;
    for (const auto& r : run_config("cartpole_" + algo)) {
      const double s = final_mean(r);
      scores[r.hyper_value].push_back(s);
      if (s >= 150.0) ++passing[r.hyper_value];
    }
    bool any = false;
    detail << "; " << algo << ":";
    for (const auto& [beta, ss] : scores) {
      detail << " beta=" << beta << " [";
      for (std::size_t i = 0; i < ss.size(); ++i) detail << (i ? " " : "") << fmt(ss[i]);
      detail << "]";
      any = any || passing[beta] >= 2;
    }
    clause_b = clause_b && any;
  }
  Verdict v;
  v.passed = clause_a && clause_b;
  v.detail = std::string("(a) ") + (clause_a ? "ok" : "fails") + ", (b) " +
             (clause_b ? "ok" : "fails") + "; " + detail.str();
  return v;
}

// --- 9 ---------------------------------------------------------------------

Verdict grid_smoke() {
  int ok = 0, total = 0;
  std::string misses;
  for (const std::string env : {"frozenlake", "cliffwalk"})
    for (const std::string algo : {"q_learning", "double_q", "agt2", "sgt2"})
      for (const auto& r : run_config("grid_" + env + "_" + algo)) {
        ++total;
        const double got = r.last("greedy_value"), best = r.last("optimal_value");
        if (std::abs(got - best) <= 1e-9) {
          ++ok;
        } else {
          misses += " " + env + "/" + algo + "/seed" + std::to_string(r.seed) + "=" + fmt(got);
        }
      }
  Verdict v;
  v.passed = ok == total;
  v.detail = std::to_string(ok) + "/" + std::to_string(total) +
             " runs reach the optimal start value" + (misses.empty() ? "" : ";" + misses);
  return v;
}

struct Criterion {
  const char* title;
  double budget_seconds;
  Verdict (*check)();
};

const Criterion kCriteria[] = {
    {"tabular convergence", 30, tabular_convergence},
    {"ODE sandwich and stability", 60, ode_sandwich},
    {"stability certificates", 5, stability_certificates},
    {"quasi-monotonicity and Lipschitz probes", 10, probes},
    {"error bound soundness fuzz", 10, bound_fuzz},
    {"tabular/deep equivalence", 5, tabular_deep_equivalence},
    {"gradient correctness", 10, gradient_checks},
    {"deep training trends", 20 * 60, deep_trends},
    {"grid-world smoke", 60, grid_smoke},
};

bool run_criterion(int n) {
  const Criterion& c = kCriteria[n - 1];
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = c.check();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_budget = secs <= c.budget_seconds;
  const bool passed = v.passed && in_budget;
  std::cout << "criterion " << n << " [" << c.title << "]: " << (passed ? "PASS" : "FAIL")
            << " - " << v.detail << "; " << std::fixed << std::setprecision(1) << secs
            << " s of " << c.budget_seconds << " s budget"
            << (in_budget ? "" : " (over budget)") << std::endl;
  std::cout.unsetf(std::ios::fixed);
  return passed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  app.add_option("--criterion", criterion, "Criterion number (1-9); omit for all")
      ->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  bool all = true;
  if (criterion > 0) {
    all = run_criterion(criterion);
  } else {
    for (int n = 1; n <= 9; ++n) all = run_criterion(n) && all;
  }
  return all ? 0 : 1;
}
