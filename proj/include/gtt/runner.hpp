#pragma once

// Config-driven experiment runner. Config grammar (one `key = value` per
// line, `[section]` headers, `#` comments, lists comma-separated):
//
//   [experiment] kind, name
//   [env]        source, states, actions, gamma, seed, path, slip, max_steps
//   [algorithm]  name, beta, period
//   [schedule]   kind, numerator, offset, alpha
//   [run]        seeds, steps, log_interval, epsilon, epsilon_final,
//                epsilon_decay_steps, equal_init
//   [ode]        dt, t_end, method, margin, slack, init_scale,
//                dump_trajectories, record_stride
//   [bound]      samples, max_scale
//   [deep]       alpha, momentum, batch_size, buffer_capacity, hidden,
//                episodes, max_env_steps, epsilon_start, epsilon_end,
//                epsilon_decay_steps, polyak_tau, independent_target_init,
//                gamma
//   [certify]    gamma
//   [output]     dir
//
// Unknown sections or keys, duplicate keys and malformed values are errors
// carrying the line number.

#include "gtt/analysis.hpp"
#include "gtt/envs.hpp"
#include "gtt/neural.hpp"
#include "gtt/record.hpp"
#include "gtt/tabular.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
  tabular_convergence,
  ode_sandwich,
  bound_check,
  deep_training,
  stability_certificate,
};

ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

/// Model or environment selector. `source` is one of example, random, file,
/// frozenlake, cliffwalk, taxi_lite, cartpole. gamma < 0 keeps the source's
/// own discount.
struct EnvSpec {
  std::string source = "example";
  int states = 3;
  int actions = 2;
  double gamma = -1.0;
  std::uint64_t seed = 0;
  std::string path;
  double slip = 0.0;
  int max_steps = 0;

  bool is_grid() const;
  bool is_tabular() const { return source != "cartpole"; }
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::tabular_convergence;
  std::string name;
  EnvSpec env;

  std::string algorithm = "agt2";
  std::vector<double> betas{1.0};
  std::vector<int> periods{10};

  std::string schedule = "harmonic";
  double numerator = 80.0;
  double offset = 200.0;
  double alpha = 0.5;

  std::vector<std::uint64_t> seeds;
  long steps = 200000;
  long log_interval = 1000;
  double epsilon = 0.1;
  double epsilon_final = 0.1;
  long epsilon_decay_steps = 0;
  bool equal_init = false;

  double dt = 1e-3;
  double t_end = 200.0;
  std::string method = "rk4";
  double margin = 1.0;
  double slack = 1e-6;
  double init_scale = 5.0;
  bool dump_trajectories = false;
  int record_stride = 100;

  long bound_samples = 100;
  double bound_max_scale = 10.0;

  DeepConfig deep;

  std::optional<double> certify_gamma;

  std::string out_dir = "out";

  /// Every setting after defaults were applied, as section.key -> value.
  std::map<std::string, std::string> resolved;
};

/// Parses and validates; `source_name` prefixes error messages.
ExperimentConfig parse_experiment_config(std::istream& in,
                                         const std::string& source_name = "config");
ExperimentConfig load_experiment_config(const std::string& path);

/// Tabular model behind a tabular EnvSpec (grid worlds expose theirs).
TabularMDP tabular_model(const EnvSpec& spec);
/// Behavior for i.i.d. sampling: the example's skewed policy, else uniform.
BehaviorDistribution default_behavior(const EnvSpec& spec, const TabularMDP& mdp);

/// Random pair used by the bound fuzz: even `k` draws both tables near Q*
/// (noise scale log-uniform in [1e-3, max_scale]), odd `k` draws them
/// independently and uniformly in [-max_scale, max_scale] around Q*.
QPair random_qpair(const QTable& qstar, long k, Rng& rng, double max_scale);

struct RunOptions {
  int workers = 1;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed_override;
};

struct RunSummary {
  std::string csv_path;
  std::string manifest_path;
  std::vector<ExperimentRecord> records;
  bool any_diverged = false;
};

/// Runs the grid (hyperparameter major, seed minor) on up to `workers`
/// threads, merges in grid order, writes <dir>/<name>.csv and
/// <dir>/<name>.manifest.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Records without touching the filesystem (used by run_experiment).
std::vector<ExperimentRecord> execute_experiment(const ExperimentConfig& config,
                                                 int workers = 1);

/// Prints one line per policy (or policy pair) and an overall verdict per
/// beta; returns true iff every beta is certified.
bool certify_experiment(const ExperimentConfig& config, std::ostream& report);

}  // namespace gtt
