// Kernel exploration bonus and the optimistic tabular planning loop.
#pragma once

#include "specrl/mdp.hpp"
#include "specrl/spectral_oracle.hpp"

namespace specrl {

// Posterior-variance style bonus b(x) = alpha * lambda^{-1/2} *
// sqrt(k(x,x) - k_x' (K + lambda I)^{-1} k_x) over the inserted features.
// linear kernel: k(x,y) = x'y, maintained in primal form via the d x d
//   regularized second-moment matrix (equal to the Gram route by duality);
// gaussian kernel: k(x,y) = exp(-|x-y|^2 / 2), dense Gram matrix form.
class BonusState {
 public:
  enum class Kernel { linear, gaussian };

  BonusState(Kernel kernel, int feature_dim, double ridge_lambda, double alpha);

  void insert(const Vec& feature);
  double bonus(const Vec& x) const;

  // Gram-matrix evaluation route, kept as the reference contract for both
  // kernels (O(n^2) per query). Throws NumericalError if the regularized
  // Gram fails a positive-definite factorization after 1e-10 jitter.
  double bonus_gram(const Vec& x) const;

  std::size_t count() const { return data_.size(); }
  double alpha() const { return alpha_; }
  double ridge() const { return lambda_; }

 private:
  double kernel_eval(const Vec& a, const Vec& b) const;

  Kernel kernel_;
  int dim_;
  double lambda_, alpha_;
  std::vector<Vec> data_;
  Mat moment_;  // linear kernel: sum of x x' (d x d)
};

// Greedy policy from value iteration on the model implied by (phi, mu) with
// the bonus added to rewards: P-hat rows are clipped at zero and renormalized
// (error when a row has no mass), r_opt(s,a) = reward(s,a) + bonus(e_{s,a}).
// Tolerance 1e-8.
struct OptimisticPlan {
  TabularPolicy policy;
  Mat p_hat;   // (S*A) x S renormalized
  Mat r_opt;   // S x A
};
OptimisticPlan optimistic_plan(const Mat& phi, const Mat& mu, const Mat& reward, double gamma,
                               const BonusState& bonus,
                               const std::function<Vec(int, int)>& feature_of);

// Deterministic "combination lock": states 0..n-1 on a chain, action 0
// advances, action 1 resets to state 0; only the final state pays reward 1
// (and is absorbing). Reaching it requires n-1 consecutive correct actions.
TabularMDP combination_lock(int n_states, double gamma);

// Episodes until the goal (last state) is first reached, driving exploration
// with the optimistic plan over empirical counts and tabular one-hot features.
// Unvisited (s,a) rows use a uniform transition estimate and reward 0.
struct LockResult {
  int episodes = 0;   // capped at max_episodes when the goal is never reached
  bool reached = false;
};
LockResult lock_episodes_optimistic(const TabularMDP& lock, int horizon, int max_episodes,
                                    double ridge_lambda, double alpha, std::mt19937_64& rng);
LockResult lock_episodes_random(const TabularMDP& lock, int horizon, int max_episodes,
                                std::mt19937_64& rng);

}  // namespace specrl
