// Closed-form ground truth on tabular MDPs: SVD factorization of the
// transition operator, linear Q-weight fits, the variational SVD objective
// and the related matrix-decomposition representations.
#pragma once

#include "specrl/mdp.hpp"

namespace specrl {

// Rank-d truncated SVD of the (S*A) x S transition matrix, absorbed as
// phi = U * diag(sigma), mu = V, so that phi * mu^T reconstructs P.
struct SpectralFactorization {
  Mat phi;              // (S*A) x d
  Mat mu;               // S x d
  Vec singular_values;  // d, nonincreasing

  Mat reconstruct() const { return phi * mu.transpose(); }
};

struct QWeights {
  Vec eta;
  double residual = 0.0;
};

// Numerical rank of the transition matrix at relative threshold 1e-10.
int transition_rank(const TabularMDP& mdp);

SpectralFactorization exact_factorization(const TabularMDP& mdp, int d);

// Least-squares fit of the flattened Q table onto the columns of phi.
QWeights fit_q_weights(const SpectralFactorization& fac, const Mat& q_table);

// Same fit for an arbitrary (S*A)-vector target (rewards, occupancies).
QWeights fit_linear_weights(const Mat& basis, const Vec& target);

// 2 E_P(s,a,s')[phi' nu'] - E_{P(s,a)P(s')}[(phi' nu')^2] summed exactly over
// the tabular support. rho is a strictly positive distribution over (s, a)
// flattened as s*A + a; phi is (S*A) x d, nu is S x d.
double scaled_svd_objective(const TabularMDP& mdp, const Vec& rho, const Mat& phi, const Mat& nu);

// The scaled kernel D_rho^{1/2} P D_{P(s')}^{-1/2} whose SVD the spectral
// contrastive loss targets, plus its top-d left singular subspace.
Mat scaled_transition_kernel(const TabularMDP& mdp, const Vec& rho);
Mat top_left_singular_subspace(const Mat& m, int d);

// Largest principal angle (degrees) between the column spaces of a and b.
double max_principal_angle_deg(const Mat& a, const Mat& b);

enum class Table1Kind { successor, laplacian, krylov };

// successor: left singular vectors of (I - gamma P^pi)^{-1};
// laplacian: top eigenvectors of Lambda P^pi + (P^pi)^T Lambda with Lambda the
//            diagonal of the stationary distribution (requires irreducibility);
// krylov: columns {(P^pi)^i r}_{i=1..k} with r the state reward under pi.
Mat table1_reps(const TabularMDP& mdp, const TabularPolicy& policy, Table1Kind kind, int d_or_k);

// Residual of the least-squares fit d^pi(s,a) = <eta, mu(s) pi(a|s)>.
double occupancy_factorization_check(const TabularMDP& mdp, const TabularPolicy& policy,
                                     const SpectralFactorization& fac);

// Random MDP whose reward is linear in the exact-SVD features (the setting
// where Q^pi is exactly linear in them); theta_r is drawn from the given rng.
TabularMDP random_linear_reward_mdp(int n_states, int n_actions, double gamma,
                                    std::mt19937_64& rng);

}  // namespace specrl
