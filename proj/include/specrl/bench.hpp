// Experiment configuration, the seeded training loop with periodic
// evaluation, and metrics emission (CSV + summary JSON).
#pragma once

#include <map>
#include <optional>

#include "specrl/agent.hpp"
#include "specrl/pomdp.hpp"

namespace specrl {

// Flat key=value configuration; unknown keys are rejected at parse time.
struct ExperimentConfig {
  std::string env = "pendulum";  // pendulum | pendulum_partial
  std::string learner = "td3";
  std::uint64_t seed = 0;
  long total_frames = 150000;
  int action_repeat = 2;
  long eval_interval_frames = 10000;
  int eval_episodes = 10;
  long warmup_frames = 10000;
  int smoothing_window = 5;
  int window_l = 1;
  int horizon = 200;
  bool downward_start = false;

  double gamma = 0.99;
  double tau = 0.005;
  int hidden = 48;
  int rep_dim = 16;
  int batch_size = 64;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double rep_lr = 3e-4;
  double policy_noise = 0.2;
  double noise_clip = 0.3;
  double exploration_noise = 0.2;
  int actor_interval = 2;
  int n_step = 1;
  double reward_loss_weight = 0.1;
  double scl_lambda = 1.0;
  double vae_beta = 1.0;
  int n_negatives = 2;
  int mc_samples = 2;
  int rff_count = 64;
  int noise_levels = 25;
  double noise_lo = 0.01;
  double noise_hi = 0.5;
  std::string denominator_mode = "include_positive";
  bool ranking_softplus = true;
  double ncel_penalty_weight = 1.0;
  double ncel_margin = 1.0;
  bool coupled = false;
  long buffer_capacity = 200000;
  bool early_stop = false;        // stop once an evaluation reaches the target
  double early_stop_return = 0.0;

  void validate() const;
  AgentConfig agent_config() const;  // gamma raised to window_l for TD targets

  static ExperimentConfig parse(const std::map<std::string, std::string>& kv);
  static ExperimentConfig load_file(const std::string& path);
  void apply_override(const std::string& key, const std::string& value);
  std::string serialize() const;  // key=value lines, stable order
};

struct MetricsRow {
  long frame = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double loss_rep = 0.0;
  double loss_reward = 0.0;
  double loss_critic = 0.0;
  double loss_actor = 0.0;
  double wallclock_s = 0.0;  // informational only; never written to artifacts
  std::uint64_t seed = 0;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  int exit_code = 0;  // 0 ok, 2 usage/config, 3 numerical halt
  std::string error;
  std::string checkpoint_path;
};

// Executes the training loop, writes <out_dir>/metrics.csv, summary.json and
// final.ckpt (or diag.ckpt on a numerical halt).
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Trailing moving average over at most `window` previous entries.
std::vector<double> smooth_trailing(const std::vector<double>& xs, int window);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
void write_summary_json(const std::vector<MetricsRow>& rows, int smoothing_window,
                        const std::string& path);

// Builds the (possibly masked / windowed) environment stack for a config.
struct EnvStack {
  std::unique_ptr<PendulumContinuous> base;
  std::unique_ptr<MaskedEnv> masked;
  std::unique_ptr<WindowedEnv> windowed;
  ContinuousEnv& top() { return *windowed; }
};
EnvStack make_env(const ExperimentConfig& cfg, std::uint64_t env_seed);

}  // namespace specrl
