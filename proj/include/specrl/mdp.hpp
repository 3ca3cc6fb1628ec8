// Exact finite MDPs, the pendulum swing-up environment, replay storage and
// the tabular policy-evaluation / occupancy oracles used as ground truth.
#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "specrl/common.hpp"

namespace specrl {

// Finite MDP with an explicit transition tensor. The transition is stored as
// a (n_states*n_actions) x n_states row-stochastic matrix, row index s*A + a.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Mat transition;  // (S*A) x S
  Mat reward;      // S x A
  double gamma = 0.0;
  Vec init_dist;   // S

  int row(int s, int a) const { return s * n_actions + a; }
  double p(int s, int a, int s2) const { return transition(row(s, a), s2); }

  // Throws std::invalid_argument if any invariant is violated.
  void validate() const;

  void save(std::ostream& out) const;
  static TabularMDP load(std::istream& in);
  void save_file(const std::string& path) const;
  static TabularMDP load_file(const std::string& path);
};

struct TabularPolicy {
  Mat probs;  // S x A, rows sum to 1

  void validate() const;
};

// Q^pi for a finite MDP: solves the Bellman system directly (fixed-point
// iteration above 2000 states). Residual of the returned table is <= tol.
Mat policy_evaluation_q(const TabularMDP& mdp, const TabularPolicy& policy, double tol = 1e-12);

// V^pi(s) = sum_a pi(a|s) Q^pi(s, a).
Vec state_values(const TabularMDP& mdp, const TabularPolicy& policy, const Mat& q);

// Normalized discounted state-action visitation d^pi, solved exactly from the
// stationarity linear system. Sums to one.
Mat occupancy_measure(const TabularMDP& mdp, const TabularPolicy& policy);

// Value iteration on (transition, reward): returns the greedy deterministic
// policy and optimal Q to sup-norm residual <= tol.
struct ValueIterationResult {
  Mat q;                    // S x A
  std::vector<int> policy;  // greedy action per state
};
ValueIterationResult value_iteration(const Mat& transition, const Mat& reward, double gamma,
                                     double tol = 1e-8, int max_iters = 1000000);

// State-to-state transition under a policy: P^pi(s'|s).
Mat state_transition(const TabularMDP& mdp, const TabularPolicy& policy);

// ---------------------------------------------------------------------------

struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
  Vec next_state;
  bool done = false;          // true terminal (no bootstrap)
  bool episode_end = false;   // terminal or time limit; stops n-step walks
};

// Bounded FIFO store with uniform-with-replacement sampling. Entries carry
// stable absolute ids so callers can walk forward for n-step targets.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t rng_seed);

  void push(Transition t);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t first_id() const { return first_id_; }
  std::uint64_t next_id() const { return first_id_ + entries_.size(); }

  const Transition& at(std::uint64_t id) const;
  bool contains(std::uint64_t id) const { return id >= first_id_ && id < next_id(); }

  // Throws std::runtime_error("replay buffer empty") on an empty buffer.
  std::vector<std::uint64_t> sample_ids(std::size_t batch_size);
  std::vector<Transition> sample(std::size_t batch_size);

 private:
  std::size_t capacity_;
  std::deque<Transition> entries_;
  std::uint64_t first_id_ = 0;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------

// Classic frictionless pendulum swing-up. theta = 0 is upright, wrapped to
// (-pi, pi]. One step() is one decision; the protocol-level action repeat is
// pure frame bookkeeping. Per-step reward: -(theta^2 + 0.1 thetadot^2 +
// 0.001 torque^2) evaluated at the pre-step state.
class PendulumEnv {
 public:
  struct Params {
    double max_torque = 2.0;
    double dt = 0.05;
    double gravity = 10.0;
    double mass = 1.0;
    double length = 1.0;
    double max_speed = 8.0;
    int horizon = 200;
    bool downward_start = false;  // deterministic theta = pi, thetadot = 0
  };

  struct StepResult {
    Vec obs;
    double reward = 0.0;
    bool done = false;
  };

  PendulumEnv(const Params& params, std::uint64_t seed);

  Vec reset();
  StepResult step(double torque);

  Vec observation() const;
  double angle() const { return angle_; }
  double angular_velocity() const { return vel_; }
  int step_count() const { return step_count_; }
  const Params& params() const { return params_; }

  static constexpr int kObsDim = 3;

 private:
  Params params_;
  double angle_ = 0.0;
  double vel_ = 0.0;
  int step_count_ = 0;
  std::mt19937_64 rng_;
};

double wrap_angle(double theta);  // to (-pi, pi]

// Test helpers: random row-stochastic MDPs and policies.
TabularMDP random_mdp(int n_states, int n_actions, double gamma, std::mt19937_64& rng);
TabularPolicy random_policy(int n_states, int n_actions, std::mt19937_64& rng);
// Random MDP of transition rank <= r (nonnegative factor construction).
TabularMDP random_low_rank_mdp(int n_states, int n_actions, int rank, double gamma,
                               std::mt19937_64& rng);

}  // namespace specrl
