// Actor-critic agent with spectral critics: four representation learners plus
// a plain TD3 baseline, double-Q critics with EMA targets, a reward head, and
// deterministic seeded substreams.
#pragma once

#include "specrl/env.hpp"
#include "specrl/rep_learn.hpp"

namespace specrl {

enum class CriticKind { mlp, linear, latent_variable, ebm };

struct AgentConfig {
  enum class Learner { td3, scl, lvrep, diffsr, ctrlsr };

  Learner learner = Learner::td3;
  RepLearnerConfig rep;  // rep_dim, scl_lambda, vae_beta, schedule, K, L, N

  int hidden = 64;
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double rep_lr = 3e-4;
  double policy_noise = 0.2;
  double noise_clip = 0.3;
  double exploration_noise = 0.2;
  int actor_interval = 2;  // actor + target updates every this many steps
  int batch_size = 64;
  int n_step = 1;
  double reward_loss_weight = 0.1;
  bool ranking_softplus = true;  // ctrlsr: SoftPlus-activated ranking loss
  double ncel_penalty_weight = 1.0;
  double ncel_margin = 1.0;
  bool coupled = false;  // critic gradients flow into representation params
  std::size_t buffer_capacity = 200000;

  void validate() const;
  CriticKind critic_kind() const;
  bool has_representation() const { return learner != Learner::td3; }
};

const char* learner_name(AgentConfig::Learner learner);
AgentConfig::Learner learner_from_name(const std::string& name);

// Q-head forward pass shared by critics and the reward head. `input` is the
// (s,a) features for mlp, phi for linear/ebm, or the latent prior mean (with
// logstd and Monte-Carlo eps draws) for latent_variable. frozen_w1 holds the
// fixed sinusoidal frequencies of the ebm head. The _const variant records
// the head parameters as constants (actor updates through frozen critics).
Tape::Val q_head_forward(Tape& t, CriticKind kind, ParamSet& params, const std::string& prefix,
                         const MlpSpec& mlp_spec, Tape::Val input, Tape::Val logstd,
                         const std::vector<Mat>& eps, const Mat& frozen_w1);
Tape::Val q_head_forward_const(Tape& t, CriticKind kind, const ParamSet& params,
                               const std::string& prefix, const MlpSpec& mlp_spec, Tape::Val input,
                               Tape::Val logstd, const std::vector<Mat>& eps,
                               const Mat& frozen_w1);

// N-step sample assembled from the replay buffer: reward already discounted
// over the walked steps, discount = gamma^k for the bootstrap.
struct Batch {
  Mat obs, act, next_obs;
  Vec reward;
  Vec not_done;
  Vec discount;
  int size() const { return static_cast<int>(obs.rows()); }
};

struct StepLosses {
  double rep = 0.0;
  double reward = 0.0;
  double critic = 0.0;
  double actor = 0.0;
  bool actor_updated = false;
};

class Agent {
 public:
  Agent(const AgentConfig& cfg, int obs_dim, int action_dim, std::uint64_t master_seed);

  // Actions live in [-1, 1]^action_dim.
  Vec act(const Vec& obs, bool explore);
  Vec act_eval(const Vec& obs) const;
  Vec random_action();

  // Stores the transition and updates the observation normalizer.
  void observe(const Transition& t);

  // One iteration of the online loop: representation update (unless td3),
  // critic update, periodic actor + EMA target updates. Throws NumericalError
  // on a non-finite loss.
  StepLosses update();

  // Individual updates, exposed for tests and the optimizer loop.
  std::pair<double, double> rep_update(const Batch& batch);  // (rep, reward) losses
  double critic_update(const Batch& batch);
  double actor_update(const Batch& batch);
  void soft_update_targets();
  Batch sample_batch();

  // Deterministic Q evaluation (mean of the two current heads is not taken;
  // head selects which critic). For latent-variable critics the Monte-Carlo
  // noise comes from the agent's noise stream unless eps is supplied.
  Vec q_eval(const ParamSet& critic, const Mat& obs_norm, const Mat& act_batch,
             const std::vector<Mat>* eps = nullptr) const;

  // Representation features for (obs_norm, act) rows; linear/ebm/diffsr path.
  Mat rep_features(const Mat& obs_norm, const Mat& act_batch) const;
  // Latent-variable prior parameters.
  void prior_eval(const Mat& obs_norm, const Mat& act_batch, Mat& mean, Mat& logstd) const;

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const AgentConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return act_dim_; }
  std::uint64_t update_count() const { return update_count_; }

  ReplayBuffer& buffer() { return buffer_; }
  RunningNormalizer& normalizer() { return normalizer_; }
  const RunningNormalizer& normalizer() const { return normalizer_; }
  ParamSet& actor_params() { return actor_; }
  ParamSet& critic1_params() { return critic1_; }
  ParamSet& critic2_params() { return critic2_; }
  ParamSet& critic1_target_params() { return target1_; }
  ParamSet& critic2_target_params() { return target2_; }
  ParamSet& rep_params() { return rep_; }
  const ParamSet& frozen_params() const { return frozen_; }
  const std::vector<double>& noise_schedule() const { return schedule_; }

 private:
  Tape::Val critic_input_tape(Tape& t, const Batch& batch, bool trainable_rep,
                              Tape::Val* logstd_out);
  Tape::Val q_head_tape(Tape& t, ParamSet& critic, const std::string& prefix, Tape::Val input,
                        Tape::Val logstd, const std::vector<Mat>& eps);
  Tape::Val q_head_tape_const(Tape& t, const ParamSet& critic, const std::string& prefix,
                              Tape::Val input, Tape::Val logstd, const std::vector<Mat>& eps);
  std::vector<Mat> draw_lv_eps(int batch_rows);
  std::vector<std::uint64_t> sample_negative_ids(std::size_t n);
  double pick_beta();
  Mat actor_eval(const ParamSet& actor, const Mat& obs_norm) const;
  void check_finite(double loss, const char* name) const;

  AgentConfig cfg_;
  int obs_dim_, act_dim_;
  std::vector<double> schedule_;

  MlpSpec actor_spec_, critic_spec_, phi_spec_, nu_spec_, prior_spec_, enc_spec_, dec_spec_,
      kappa_spec_;

  RunningNormalizer normalizer_;
  ReplayBuffer buffer_;
  ParamSet actor_, actor_target_;
  ParamSet critic1_, critic2_, target1_, target2_;
  ParamSet rep_;     // representation nets + reward head
  ParamSet frozen_;  // frozen sinusoidal frequencies for the ebm critic

  std::unique_ptr<Adam> opt_actor_, opt_critic1_, opt_critic2_, opt_rep_;
  std::mt19937_64 noise_rng_, neg_rng_;
  std::uint64_t update_count_ = 0;
};

// Undiscounted mean/population-std return of the deterministic policy on a
// frozen snapshot (normalizer frozen during rollouts).
std::pair<double, double> evaluate(Agent& agent, ContinuousEnv& env, int n_episodes);

}  // namespace specrl
