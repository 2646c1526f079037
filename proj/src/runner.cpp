#include "gtt/runner.hpp"

#include "gtt/ode.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#ifndef GTT_VERSION
#define GTT_VERSION "unknown"
#endif

namespace gtt {

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "tabular_convergence") return ExperimentKind::tabular_convergence;
  if (name == "ode_sandwich") return ExperimentKind::ode_sandwich;
  if (name == "bound_check") return ExperimentKind::bound_check;
  if (name == "deep_training") return ExperimentKind::deep_training;
  if (name == "stability_certificate") return ExperimentKind::stability_certificate;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::tabular_convergence: return "tabular_convergence";
    case ExperimentKind::ode_sandwich: return "ode_sandwich";
    case ExperimentKind::bound_check: return "bound_check";
    case ExperimentKind::deep_training: return "deep_training";
    case ExperimentKind::stability_certificate: return "stability_certificate";
  }
  return "?";
}

bool EnvSpec::is_grid() const {
  return source == "frozenlake" || source == "cliffwalk" || source == "taxi_lite";
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"kind", "name"}},
      {"env", {"source", "states", "actions", "gamma", "seed", "path", "slip", "max_steps"}},
      {"algorithm", {"name", "beta", "period"}},
      {"schedule", {"kind", "numerator", "offset", "alpha"}},
      {"run",
       {"seeds", "steps", "log_interval", "epsilon", "epsilon_final",
        "epsilon_decay_steps", "equal_init"}},
      {"ode",
       {"dt", "t_end", "method", "margin", "slack", "init_scale", "dump_trajectories",
        "record_stride"}},
      {"bound", {"samples", "max_scale"}},
      {"deep",
       {"alpha", "momentum", "batch_size", "buffer_capacity", "hidden", "episodes",
        "max_env_steps", "epsilon_start", "epsilon_end", "epsilon_decay_steps",
        "polyak_tau", "independent_target_init", "gamma"}},
      {"certify", {"gamma"}},
      {"output", {"dir"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  int line;
};

class ConfigReader {
 public:
  ConfigReader(std::istream& in, std::string source) : source_(std::move(source)) {
    std::string raw, section;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      const std::string line = trim(raw.substr(0, raw.find('#')));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(lineno, "malformed section header '" + line + "'");
        section = trim(line.substr(1, line.size() - 2));
        if (!allowed_keys().count(section)) fail(lineno, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(lineno, "expected 'key = value', got '" + line + "'");
      if (section.empty()) fail(lineno, "key outside of any section");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (!allowed_keys().at(section).count(key))
        fail(lineno, "unknown key '" + key + "' in section [" + section + "]");
      if (value.empty()) fail(lineno, "empty value for '" + key + "'");
      auto& sec = entries_[section];
      if (sec.count(key)) fail(lineno, "duplicate key '" + key + "' in [" + section + "]");
      sec[key] = {value, lineno};
    }
  }

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
  }

  const Entry* find(const std::string& section, const std::string& key) const {
    auto s = entries_.find(section);
    if (s == entries_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  int line_of(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    return e ? e->line : 0;
  }

  template <class T>
  T parse_scalar(const std::string& text, const Entry& e, const std::string& key) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      fail(e.line, "'" + key + "' expects true or false, got '" + text + "'");
    } else {
      T v{};
      const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        fail(e.line, "'" + key + "' has malformed value '" + text + "'");
      return v;
    }
  }

  template <class T>
  T get(const std::string& section, const std::string& key, T fallback) {
    const Entry* e = find(section, key);
    T v = e ? parse_scalar<T>(e->value, *e, key) : fallback;
    std::ostringstream os;
    if constexpr (std::is_same_v<T, double>) os << format_double(v);
    else if constexpr (std::is_same_v<T, bool>) os << (v ? "true" : "false");
    else os << v;
    resolved_[section + "." + key] = os.str();
    return v;
  }

  template <class T>
  std::vector<T> get_list(const std::string& section, const std::string& key,
                          std::vector<T> fallback) {
    const Entry* e = find(section, key);
    std::vector<T> out;
    if (e) {
      std::stringstream ss(e->value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(e->line, "empty item in list '" + key + "'");
        out.push_back(parse_scalar<T>(item, *e, key));
      }
    } else {
      out = std::move(fallback);
    }
    std::ostringstream os;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i) os << ',';
      if constexpr (std::is_same_v<T, double>) os << format_double(out[i]);
      else os << out[i];
    }
    resolved_[section + "." + key] = os.str();
    return out;
  }

  std::map<std::string, std::string> resolved() const { return resolved_; }

  // Throws a located error when `ok` is false.
  void require(bool ok, const std::string& section, const std::string& key,
               const std::string& msg) const {
    if (ok) return;
    const int line = line_of(section, key);
    if (line > 0) fail(line, msg);
    throw ConfigError(source_ + ": " + msg + " (" + section + "." + key + ")");
  }

 private:
  std::string source_;
  std::map<std::string, std::map<std::string, Entry>> entries_;
  std::map<std::string, std::string> resolved_;
};

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& source_name) {
  ConfigReader rd(in, source_name);
  ExperimentConfig c;
  rd.require(rd.find("experiment", "kind") != nullptr, "experiment", "kind",
             "missing required key");
  const std::string kind = rd.get<std::string>("experiment", "kind", "");
  try {
    c.kind = parse_experiment_kind(kind);
  } catch (const ConfigError& e) {
    rd.fail(rd.line_of("experiment", "kind"), e.what());
  }
  c.name = rd.get<std::string>("experiment", "name", kind);
  rd.require(c.name.find_first_of("/\\ ") == std::string::npos, "experiment", "name",
             "name must not contain spaces or path separators");

  const bool deep = c.kind == ExperimentKind::deep_training;
  c.env.source = rd.get<std::string>("env", "source", deep ? "cartpole" : "example");
  static const std::set<std::string> sources = {"example", "random", "file", "frozenlake",
                                                "cliffwalk", "taxi_lite", "cartpole"};
  rd.require(sources.count(c.env.source) == 1, "env", "source",
             "unknown env source '" + c.env.source + "'");
  c.env.states = rd.get<int>("env", "states", 3);
  c.env.actions = rd.get<int>("env", "actions", 2);
  rd.require(c.env.states >= 1 && c.env.actions >= 1, "env", "states",
             "states and actions must be >= 1");
  c.env.gamma = rd.get<double>("env", "gamma", -1.0);
  rd.require(c.env.gamma < 1.0, "env", "gamma", "gamma must be < 1");
  c.env.seed = rd.get<std::uint64_t>("env", "seed", 0);
  c.env.path = rd.get<std::string>("env", "path", "");
  rd.require(c.env.source != "file" || !c.env.path.empty(), "env", "path",
             "source = file needs a path");
  c.env.slip = rd.get<double>("env", "slip", 0.0);
  rd.require(c.env.slip >= 0.0 && c.env.slip <= 1.0, "env", "slip", "slip must lie in [0, 1]");
  c.env.max_steps = rd.get<int>("env", "max_steps", 0);
  rd.require(deep || c.env.is_tabular(), "env", "source",
             "cartpole is only available to deep_training");

  const char* default_algo = deep ? "dqn" : "agt2";
  c.algorithm = rd.get<std::string>("algorithm", "name", default_algo);
  try {
    if (c.kind == ExperimentKind::tabular_convergence) parse_tabular_algorithm(c.algorithm);
    else if (deep) parse_deep_algorithm(c.algorithm);
    else parse_tracking_variant(c.algorithm);
  } catch (const std::invalid_argument& e) {
    rd.require(false, "algorithm", "name", e.what());
  }
  c.betas = rd.get_list<double>("algorithm", "beta", {1.0});
  rd.require(!c.betas.empty(), "algorithm", "beta", "beta list is empty");
  for (double b : c.betas) rd.require(b > 0.0, "algorithm", "beta", "beta must be positive");
  c.periods = rd.get_list<int>("algorithm", "period", {10});
  for (int p : c.periods) rd.require(p >= 1, "algorithm", "period", "period C must be >= 1");

  c.schedule = rd.get<std::string>("schedule", "kind", "harmonic");
  rd.require(c.schedule == "harmonic" || c.schedule == "constant", "schedule", "kind",
             "schedule kind must be harmonic or constant");
  c.numerator = rd.get<double>("schedule", "numerator", 80.0);
  c.offset = rd.get<double>("schedule", "offset", 200.0);
  c.alpha = rd.get<double>("schedule", "alpha", 0.5);
  try {
    if (c.schedule == "harmonic") StepSchedule::harmonic(c.numerator, c.offset);
    else StepSchedule::constant(c.alpha);
  } catch (const std::invalid_argument& e) {
    rd.require(false, "schedule", c.schedule == "harmonic" ? "numerator" : "alpha", e.what());
  }

  const bool needs_seeds = c.kind != ExperimentKind::stability_certificate;
  rd.require(!needs_seeds || rd.find("run", "seeds") != nullptr, "run", "seeds",
             "missing required key");
  c.seeds = rd.get_list<std::uint64_t>("run", "seeds", {0});
  rd.require(!c.seeds.empty(), "run", "seeds", "seeds list is empty");
  c.steps = rd.get<long>("run", "steps", 200000);
  rd.require(c.steps >= 0, "run", "steps", "steps must be >= 0");
  c.log_interval = rd.get<long>("run", "log_interval", 1000);
  rd.require(c.log_interval >= 1, "run", "log_interval", "log_interval must be >= 1");
  c.epsilon = rd.get<double>("run", "epsilon", 0.1);
  c.epsilon_final = rd.get<double>("run", "epsilon_final", c.epsilon);
  rd.require(c.epsilon >= 0.0 && c.epsilon <= 1.0 && c.epsilon_final >= 0.0 &&
                 c.epsilon_final <= 1.0,
             "run", "epsilon", "epsilon must lie in [0, 1]");
  c.epsilon_decay_steps = rd.get<long>("run", "epsilon_decay_steps", 0);
  rd.require(c.epsilon_decay_steps >= 0, "run", "epsilon_decay_steps", "must be >= 0");
  c.equal_init = rd.get<bool>("run", "equal_init", false);

  c.dt = rd.get<double>("ode", "dt", 1e-3);
  rd.require(c.dt > 0.0, "ode", "dt", "dt must be positive");
  c.t_end = rd.get<double>("ode", "t_end", 200.0);
  rd.require(c.t_end > 0.0, "ode", "t_end", "t_end must be positive");
  c.method = rd.get<std::string>("ode", "method", "rk4");
  rd.require(c.method == "rk4" || c.method == "euler", "ode", "method",
             "method must be rk4 or euler");
  c.margin = rd.get<double>("ode", "margin", 1.0);
  rd.require(c.margin > 0.0, "ode", "margin", "margin must be positive");
  c.slack = rd.get<double>("ode", "slack", 1e-6);
  rd.require(c.slack >= 0.0, "ode", "slack", "slack must be >= 0");
  c.init_scale = rd.get<double>("ode", "init_scale", 5.0);
  rd.require(c.init_scale >= 0.0, "ode", "init_scale", "init_scale must be >= 0");
  c.dump_trajectories = rd.get<bool>("ode", "dump_trajectories", false);
  c.record_stride = rd.get<int>("ode", "record_stride", 100);
  rd.require(c.record_stride >= 1, "ode", "record_stride", "record_stride must be >= 1");

  c.bound_samples = rd.get<long>("bound", "samples", 100);
  rd.require(c.bound_samples >= 1, "bound", "samples", "samples must be >= 1");
  c.bound_max_scale = rd.get<double>("bound", "max_scale", 10.0);
  rd.require(c.bound_max_scale > 1e-3, "bound", "max_scale", "max_scale must exceed 1e-3");

  DeepConfig& d = c.deep;
  d.alpha = rd.get<double>("deep", "alpha", d.alpha);
  d.momentum = rd.get<double>("deep", "momentum", d.momentum);
  d.batch_size = rd.get<int>("deep", "batch_size", d.batch_size);
  d.buffer_capacity = rd.get<std::size_t>("deep", "buffer_capacity", d.buffer_capacity);
  d.hidden = rd.get_list<int>("deep", "hidden", d.hidden);
  d.episodes = rd.get<long>("deep", "episodes", d.episodes);
  d.max_env_steps = rd.get<long>("deep", "max_env_steps", d.max_env_steps);
  d.epsilon_start = rd.get<double>("deep", "epsilon_start", d.epsilon_start);
  d.epsilon_end = rd.get<double>("deep", "epsilon_end", d.epsilon_end);
  d.epsilon_decay_steps = rd.get<long>("deep", "epsilon_decay_steps", d.epsilon_decay_steps);
  d.polyak_tau = rd.get<double>("deep", "polyak_tau", d.polyak_tau);
  d.independent_target_init =
      rd.get<bool>("deep", "independent_target_init", c.algorithm == "sgt2_dqn");
  d.gamma = rd.get<double>("deep", "gamma", d.gamma);
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    rd.require(false, "deep", "alpha", e.what());
  }

  if (rd.find("certify", "gamma")) c.certify_gamma = rd.get<double>("certify", "gamma", 0.0);
  c.out_dir = rd.get<std::string>("output", "dir", "out");
  c.resolved = rd.resolved();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_experiment_config(in, path);
}

// ---------------------------------------------------------------------------
// Models

TabularMDP tabular_model(const EnvSpec& spec) {
  auto with_gamma = [&](TabularMDP m) {
    return spec.gamma >= 0.0 ? m.with_gamma(spec.gamma) : m;
  };
  if (spec.source == "example") return with_gamma(example_mdp().mdp);
  if (spec.source == "random")
    return random_mdp(spec.states, spec.actions, spec.gamma >= 0.0 ? spec.gamma : 0.9,
                      spec.seed);
  if (spec.source == "file") return with_gamma(load_mdp(spec.path));
  if (spec.is_grid()) {
    GridParams p;
    p.slip = spec.slip;
    if (spec.gamma >= 0.0) p.gamma = spec.gamma;
    p.max_steps = spec.max_steps;
    return gridworld(parse_grid_kind(spec.source), p).model();
  }
  throw std::invalid_argument("env source '" + spec.source + "' has no tabular model");
}

BehaviorDistribution default_behavior(const EnvSpec& spec, const TabularMDP& mdp) {
  if (spec.source == "example") return example_mdp().behavior;
  return BehaviorDistribution::uniform(mdp.n_states(), mdp.n_actions());
}

QPair random_qpair(const QTable& qstar, long k, Rng& rng, double max_scale) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> log_scale(std::log(1e-3), std::log(max_scale));
  QPair p{qstar, qstar};
  const double scale = (k % 2 == 0) ? std::exp(log_scale(rng)) : max_scale;
  for (int i = 0; i < qstar.size(); ++i) {
    p.a.values[i] += scale * unit(rng);
    p.b.values[i] += scale * unit(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Jobs

namespace {

struct Job {
  double hyper;
  std::uint64_t seed;
};

ExperimentRecord base_record(const ExperimentConfig& c, const std::string& hyper_name,
                             double hyper, std::uint64_t seed) {
  ExperimentRecord r;
  r.experiment = c.name;
  r.algorithm = c.algorithm;
  r.hyper_name = hyper_name;
  r.hyper_value = hyper;
  r.seed = seed;
  return r;
}

StepSchedule make_schedule(const ExperimentConfig& c) {
  return c.schedule == "harmonic" ? StepSchedule::harmonic(c.numerator, c.offset)
                                  : StepSchedule::constant(c.alpha);
}

ExperimentRecord run_tabular(const ExperimentConfig& c, const Job& job) {
  LearnerConfig lc;
  lc.algorithm = parse_tabular_algorithm(c.algorithm);
  lc.beta = job.hyper;
  lc.schedule = make_schedule(c);
  lc.total_steps = c.steps;
  lc.log_interval = c.log_interval;
  lc.seed = job.seed;
  lc.equal_init = c.equal_init;
  TabularRun run;
  if (c.env.is_grid()) {
    lc.sampling = EpisodicSampling{c.epsilon, c.epsilon_final, c.epsilon_decay_steps};
    GridParams p;
    p.slip = c.env.slip;
    if (c.env.gamma >= 0.0) p.gamma = c.env.gamma;
    p.max_steps = c.env.max_steps;
    TabularEnv env = gridworld(parse_grid_kind(c.env.source), p);
    run = run_learner(lc, env);
    // Exact return of the learned greedy policy from the initial distribution.
    const TabularMDP& m = env.model();
    const PolicyMatrix pi = greedy_policy(acting_q(run.final, lc.algorithm));
    const QTable qpi = policy_evaluation_q(m, pi);
    const QTable qstar = optimal_q(m);
    double v = 0.0, vstar = 0.0;
    for (int s = 0; s < m.n_states(); ++s) {
      v += env.initial_dist()[s] * qpi(s, pi.action(s));
      vstar += env.initial_dist()[s] * qstar.max_value(s);
    }
    run.record.add(c.steps, "greedy_value", v);
    run.record.add(c.steps, "optimal_value", vstar);
  } else {
    const TabularMDP mdp = tabular_model(c.env);
    run = run_learner(lc, mdp, default_behavior(c.env, mdp));
  }
  ExperimentRecord r = base_record(c, "beta", job.hyper, job.seed);
  r.rows = std::move(run.record.rows);
  r.diverged = run.record.diverged;
  return r;
}

int count_policy_switches(const Trajectory& traj, const OdeModel& m) {
  const int n = m.n_pairs();
  int switches = 0;
  std::optional<PolicyMatrix> prev;
  for (Eigen::Index k = 0; k < traj.states.rows(); ++k) {
    const Vector qb = traj.states.row(k).tail(n).transpose() + m.qstar;
    PolicyMatrix pi = greedy_policy(qb, m.n_states, m.n_actions);
    if (prev && !(*prev == pi)) ++switches;
    prev = std::move(pi);
  }
  return switches;
}

void dump(const ExperimentConfig& c, const Job& job, const std::string& which,
          const Trajectory& t) {
  std::filesystem::create_directories(c.out_dir);
  const std::string path = c.out_dir + "/" + c.name + "_beta" + format_double(job.hyper) +
                           "_seed" + std::to_string(job.seed) + "_" + which + ".csv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  Trajectory thin;
  thin.dt = t.dt;
  thin.method = t.method;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index k = 0; k < t.states.rows(); k += c.record_stride) rows.push_back(k);
  if (rows.back() != t.states.rows() - 1) rows.push_back(t.states.rows() - 1);
  thin.states.resize(static_cast<Eigen::Index>(rows.size()), t.states.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    thin.times.push_back(t.times[rows[i]]);
    thin.states.row(static_cast<Eigen::Index>(i)) = t.states.row(rows[i]);
  }
  write_trajectory_csv(out, thin);
}

ExperimentRecord run_ode(const ExperimentConfig& c, const Job& job) {
  const TabularMDP mdp = tabular_model(c.env);
  const auto model =
      std::make_shared<const OdeModel>(mdp, default_behavior(c.env, mdp), job.hyper);
  const bool agt2 = c.algorithm == "agt2";
  const OdeField original =
      make_field(agt2 ? FieldKind::agt2_original : FieldKind::sgt2_original, model);
  const OdeField upper = make_field(agt2 ? FieldKind::agt2_upper : FieldKind::sgt2_upper, model);
  const OdeField lower = make_field(agt2 ? FieldKind::agt2_lower : FieldKind::sgt2_lower, model);

  Rng rng(job.seed);
  std::uniform_real_distribution<double> unif(-c.init_scale, c.init_scale);
  Vector x0(original.dim());
  for (int i = 0; i < x0.size(); ++i) x0[i] = unif(rng);
  const Vector ones = Vector::Ones(x0.size());
  const Integrator method = parse_integrator(c.method);
  const Trajectory t_orig = integrate(original, x0, c.dt, c.t_end, method);
  const Trajectory t_up = integrate(upper, x0 + c.margin * ones, c.dt, c.t_end, method);
  const Trajectory t_low = integrate(lower, x0 - c.margin * ones, c.dt, c.t_end, method);
  const SandwichReport rep = check_sandwich(t_low, t_orig, t_up, c.slack);

  ExperimentRecord r = base_record(c, "beta", job.hyper, job.seed);
  r.add(0, "sandwich_passed", rep.passed ? 1.0 : 0.0);
  r.add(0, "max_violation", rep.max_violation);
  r.add(0, "first_violation_time", rep.first_violation ? rep.first_violation->time : -1.0);
  r.add(0, "final_norm_lower", t_low.final_state().lpNorm<Eigen::Infinity>());
  r.add(0, "final_norm_original", t_orig.final_state().lpNorm<Eigen::Infinity>());
  r.add(0, "final_norm_upper", t_up.final_state().lpNorm<Eigen::Infinity>());
  r.add(0, "policy_switches", count_policy_switches(t_orig, *model));
  if (c.dump_trajectories) {
    dump(c, job, "lower", t_low);
    dump(c, job, "original", t_orig);
    dump(c, job, "upper", t_up);
  }
  return r;
}

ExperimentRecord run_bounds(const ExperimentConfig& c, const Job& job) {
  const TabularMDP mdp = tabular_model(c.env);
  const QTable qstar = policy_iteration_q(mdp);
  const TrackingVariant variant = parse_tracking_variant(c.algorithm);
  Rng rng(job.seed);
  ExperimentRecord r = base_record(c, "beta", job.hyper, job.seed);
  for (long k = 0; k < c.bound_samples; ++k) {
    const QPair p = random_qpair(qstar, k, rng, c.bound_max_scale);
    const BoundReport b = verify_bounds(p, mdp, job.hyper, variant, qstar);
    r.add(k, "epsilon", b.epsilon);
    r.add(k, "bound_q1", b.bound_q1);
    r.add(k, "bound_q2", b.bound_q2);
    r.add(k, "observed_q1", b.observed_err_q1);
    r.add(k, "observed_q2", b.observed_err_q2);
    r.add(k, "satisfied_q1", b.satisfied_q1 ? 1.0 : 0.0);
    r.add(k, "satisfied_q2", b.satisfied_q2 ? 1.0 : 0.0);
  }
  return r;
}

ExperimentRecord run_deep(const ExperimentConfig& c, const Job& job) {
  const DeepAlgorithm algo = parse_deep_algorithm(c.algorithm);
  DeepConfig cfg = c.deep;
  cfg.seed = job.seed;
  if (algo == DeepAlgorithm::dqn) cfg.update_period = static_cast<int>(job.hyper);
  else cfg.beta = job.hyper;
  // The environment draws from its own stream, offset from the learner's.
  const std::uint64_t env_seed = job.seed + 1000;
  DeepRun run = [&] {
    if (c.env.source == "cartpole") {
      CartPole env(env_seed, c.env.max_steps > 0 ? c.env.max_steps : 500);
      return train(algo, env, cfg);
    }
    GridParams p;
    p.slip = c.env.slip;
    if (c.env.gamma >= 0.0) p.gamma = c.env.gamma;
    p.max_steps = c.env.max_steps;
    OneHotEnv env(gridworld(parse_grid_kind(c.env.source), p), env_seed);
    return train(algo, env, cfg);
  }();
  ExperimentRecord r =
      base_record(c, algo == DeepAlgorithm::dqn ? "C" : "beta", job.hyper, job.seed);
  r.rows = std::move(run.record.rows);
  r.diverged = run.record.diverged;
  return r;
}

ExperimentRecord run_certificate(const ExperimentConfig& c, const Job& job) {
  const TabularMDP mdp = tabular_model(c.env);
  const double gamma = c.certify_gamma.value_or(mdp.gamma());
  const CertificateReport rep = certify(c.algorithm == "sgt2", mdp,
                                        default_behavior(c.env, mdp), job.hyper, gamma);
  ExperimentRecord r = base_record(c, "beta", job.hyper, 0);
  for (std::size_t i = 0; i < rep.outcomes.size(); ++i)
    r.add(static_cast<long>(i), "row_dominating", rep.outcomes[i] ? 1.0 : 0.0);
  r.add(static_cast<long>(rep.outcomes.size()), "certified", rep.certified() ? 1.0 : 0.0);
  return r;
}

std::vector<Job> build_jobs(const ExperimentConfig& c) {
  std::vector<double> hypers;
  if (c.kind == ExperimentKind::deep_training && c.algorithm == "dqn") {
    for (int p : c.periods) hypers.push_back(p);
  } else if (c.kind == ExperimentKind::tabular_convergence &&
             (c.algorithm == "q_learning" || c.algorithm == "double_q")) {
    hypers.push_back(0.0);  // beta is unused by these learners
  } else {
    hypers = c.betas;
  }
  std::vector<Job> jobs;
  for (double h : hypers) {
    if (c.kind == ExperimentKind::stability_certificate) {
      jobs.push_back({h, 0});
      continue;
    }
    std::vector<std::uint64_t> seeds = c.seeds;
    std::sort(seeds.begin(), seeds.end());
    for (auto s : seeds) jobs.push_back({h, s});
  }
  return jobs;
}

ExperimentRecord run_job(const ExperimentConfig& c, const Job& job) {
  switch (c.kind) {
    case ExperimentKind::tabular_convergence: return run_tabular(c, job);
    case ExperimentKind::ode_sandwich: return run_ode(c, job);
    case ExperimentKind::bound_check: return run_bounds(c, job);
    case ExperimentKind::deep_training: return run_deep(c, job);
    case ExperimentKind::stability_certificate: return run_certificate(c, job);
  }
  throw std::logic_error("unhandled experiment kind");
}

}  // namespace

std::vector<ExperimentRecord> execute_experiment(const ExperimentConfig& config, int workers) {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  const std::vector<Job> jobs = build_jobs(config);
  std::vector<ExperimentRecord> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_job(config, jobs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  ExperimentConfig c = config;
  if (options.out_dir) c.out_dir = *options.out_dir;
  if (options.seed_override) {
    c.seeds = {*options.seed_override};
    c.resolved["run.seeds"] = std::to_string(*options.seed_override);
  }
  c.resolved["output.dir"] = c.out_dir;

  const auto wall_start = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.records = execute_experiment(c, options.workers);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::filesystem::create_directories(c.out_dir);
  summary.csv_path = c.out_dir + "/" + c.name + ".csv";
  summary.manifest_path = c.out_dir + "/" + c.name + ".manifest";
  {
    std::ofstream out(summary.csv_path);
    if (!out) throw std::runtime_error("cannot write " + summary.csv_path);
    write_csv_header(out);
    for (const auto& r : summary.records) {
      write_csv_rows(out, r);
      summary.any_diverged = summary.any_diverged || r.diverged;
    }
  }
  {
    std::ofstream out(summary.manifest_path);
    if (!out) throw std::runtime_error("cannot write " + summary.manifest_path);
    const std::time_t started = std::chrono::system_clock::to_time_t(wall_start);
    out << "version = " << GTT_VERSION << '\n';
    out << "started_utc = " << std::put_time(std::gmtime(&started), "%Y-%m-%dT%H:%M:%SZ") << '\n';
    out << "wall_clock_seconds = " << std::fixed << std::setprecision(3) << elapsed << '\n';
    out << "workers = " << options.workers << '\n';
    out << "csv = " << summary.csv_path << '\n';
    out << "runs = " << summary.records.size() << '\n';
    out << "any_diverged = " << (summary.any_diverged ? "true" : "false") << '\n';
    for (const auto& [k, v] : c.resolved) out << "config." << k << " = " << v << '\n';
  }
  return summary;
}

bool certify_experiment(const ExperimentConfig& config, std::ostream& report) {
  if (!config.env.is_tabular())
    throw std::invalid_argument("certify needs a tabular model");
  if (config.algorithm != "agt2" && config.algorithm != "sgt2")
    throw std::invalid_argument("certify needs algorithm agt2 or sgt2");
  const TabularMDP mdp = tabular_model(config.env);
  const double gamma = config.certify_gamma.value_or(mdp.gamma());
  const bool symmetric = config.algorithm == "sgt2";
  bool all = true;
  for (double beta : config.betas) {
    const CertificateReport rep =
        certify(symmetric, mdp, default_behavior(config.env, mdp), beta, gamma);
    for (std::size_t i = 0; i < rep.outcomes.size(); ++i)
      report << (symmetric ? "policy_pair " : "policy ") << i << ' '
             << (rep.outcomes[i] ? "pass" : "fail") << '\n';
    report << "beta=" << format_double(beta) << " gamma=" << format_double(gamma) << ' '
           << rep.checked - rep.failed << '/' << rep.checked << ' '
           << (rep.certified() ? "certified" : "not certified") << '\n';
    all = all && rep.certified();
  }
  return all;
}

}  // namespace gtt
