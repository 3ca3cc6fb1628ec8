// Representation-learning objectives: spectral contrastive, variational
// (ELBO), conditional score matching, and ranking-based perturbed NCE, plus
// the random-Fourier-feature / energy-based representation machinery.
#pragma once

#include "specrl/nn.hpp"

namespace specrl {

struct RepLearnerConfig {
  enum class Kind { scl, lvrep, diffsr, ctrlsr };
  enum class DenominatorMode { negatives_only, include_positive };

  Kind kind = Kind::scl;
  int rep_dim = 16;
  double scl_lambda = 1.0;
  double vae_beta = 1.0;
  std::vector<double> noise_schedule;  // strictly increasing, each in (0,1)
  int n_negatives = 4;                 // K
  int mc_samples = 1;                  // L
  int rff_count = 128;                 // N
  DenominatorMode denominator_mode = DenominatorMode::include_positive;

  void validate() const;
};

// M levels geometrically spaced in [lo, hi]; the default schedule.
std::vector<double> geometric_noise_schedule(int m, double lo = 0.01, double hi = 0.5);

// --- random Fourier features / energy-based representation -----------------

// Frozen bank of N unit-Gaussian frequency rows.
struct RffBank {
  Mat frequencies;  // N x d

  static RffBank init(int n, int d, std::mt19937_64& rng);
  int n() const { return static_cast<int>(frequencies.rows()); }
  int d() const { return static_cast<int>(frequencies.cols()); }
};

// zeta_N(x): interleaved (cos w_i'x, sin w_i'x) / sqrt(N), length 2N,
// always unit norm.
Vec rff_features(const RffBank& bank, const Vec& x);
Mat rff_features_batch(const RffBank& bank, const Mat& x);  // rows are inputs

// zeta_N(phi_e) / <zeta_N(phi_e), u>. Throws NumericalError when the
// normalizer magnitude is below 1e-8.
Vec ebm_rep(const RffBank& bank, const Vec& phi_e, const Vec& u);

// --- perturbation kernel ----------------------------------------------------

// sqrt(1-beta) x + sqrt(beta) eps, eps ~ N(0, I), applied rowwise.
Mat perturb(const Mat& x, double beta, std::mt19937_64& rng);

// Analytic gradient of log P(x_tilde | x; beta): -(x_tilde - sqrt(1-beta) x) / beta.
Mat score_target(const Mat& x_tilde, const Mat& x, double beta);

// Throws when beta is not one of the schedule values.
void check_beta_in_schedule(double beta, const std::vector<double>& schedule);

// --- losses (tape-level; all are minimization targets) ----------------------

// (lambda/B) sum (phi' mu_neg)^2 - (2/B) sum (phi' mu_pos). Throws on B=0.
Tape::Val scl_loss(Tape& t, Tape::Val phi, Tape::Val mu_pos, Tape::Val mu_neg, double lambda);

// mean + exp(clamp(logstd, -20, 2)) .* eps, with eps supplied by the caller.
Tape::Val reparam_sample(Tape& t, Tape::Val mean, Tape::Val logstd, const Mat& eps);

// Closed-form KL(N(q) || N(p)) for diagonal Gaussians, summed over dims,
// B x 1. Log-stds are clamped to [-20, 2] inside.
Tape::Val gaussian_kl(Tape& t, Tape::Val q_mean, Tape::Val q_logstd, Tape::Val p_mean,
                      Tape::Val p_logstd);

// -(E_q log nu(target | z) - beta KL) averaged over the batch; the decoder is
// a unit-variance Gaussian whose mean (at the reparameterized z) the caller
// passes in. Throws NumericalError on a non-finite result.
Tape::Val elbo_loss(Tape& t, Tape::Val q_mean, Tape::Val q_logstd, Tape::Val p_mean,
                    Tape::Val p_logstd, Tape::Val decoder_mean, const Mat& target, double beta);

// MSE between phi(s,a)' kappa(s_tilde', beta) and the analytic score target.
// score_packed is B x (d * dim_s), row b holding kappa's d x dim_s output in
// row-major order.
Tape::Val csm_loss(Tape& t, Tape::Val phi, Tape::Val score_packed, const Mat& target, int dim_s);

// Ranking loss -mean[pos_logit - logsumexp(denominator logits)]; pos_logits is
// B x 1, neg_logits B x K. Throws on K=0.
Tape::Val rp_nce_loss(Tape& t, Tape::Val pos_logits, Tape::Val neg_logits,
                      RepLearnerConfig::DenominatorMode mode);

// Same ranking loss with logits = SoftPlus(inner products), plus
// penalty_weight * mean(relu(margin - inner product)) over all dots.
Tape::Val rp_ncel_loss(Tape& t, Tape::Val pos_dots, Tape::Val neg_dots,
                       RepLearnerConfig::DenominatorMode mode, double penalty_weight,
                       double margin = 1.0);

}  // namespace specrl
