#include "specrl/rep_learn.hpp"

#include <cmath>

namespace specrl {

void RepLearnerConfig::validate() const {
  if (rep_dim < 1) throw std::invalid_argument("rep config: rep_dim must be positive");
  if (!(scl_lambda > 0.0)) throw std::invalid_argument("rep config: scl_lambda must be positive");
  if (n_negatives < 1) throw std::invalid_argument("rep config: need at least one negative");
  if (mc_samples < 1) throw std::invalid_argument("rep config: mc_samples must be positive");
  if (rff_count < 1) throw std::invalid_argument("rep config: rff_count must be positive");
  for (std::size_t i = 0; i < noise_schedule.size(); ++i) {
    double b = noise_schedule[i];
    if (!(b > 0.0 && b < 1.0))
      throw std::invalid_argument("rep config: noise levels must lie in (0,1)");
    if (i > 0 && !(b > noise_schedule[i - 1]))
      throw std::invalid_argument("rep config: noise schedule must be strictly increasing");
  }
}

std::vector<double> geometric_noise_schedule(int m, double lo, double hi) {
  if (m < 1) throw std::invalid_argument("noise schedule: need at least one level");
  if (!(lo > 0.0 && hi < 1.0 && lo < hi))
    throw std::invalid_argument("noise schedule: need 0 < lo < hi < 1");
  std::vector<double> out(m);
  if (m == 1) {
    out[0] = lo;
    return out;
  }
  double ratio = std::pow(hi / lo, 1.0 / (m - 1));
  for (int i = 0; i < m; ++i) out[i] = lo * std::pow(ratio, i);
  out.back() = hi;
  return out;
}

// --- RFF / EBM ---------------------------------------------------------------

RffBank RffBank::init(int n, int d, std::mt19937_64& rng) {
  if (n < 1 || d < 1) throw std::invalid_argument("rff bank: need n, d >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  RffBank bank;
  bank.frequencies = Mat(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) bank.frequencies(r, c) = gauss(rng);
  return bank;
}

Vec rff_features(const RffBank& bank, const Vec& x) {
  if (x.size() != bank.d()) throw std::invalid_argument("rff: input dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("rff: non-finite input");
  const int n = bank.n();
  double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Vec proj = bank.frequencies * x;
  Vec out(2 * n);
  for (int i = 0; i < n; ++i) {
    out(2 * i) = std::cos(proj(i)) * scale;
    out(2 * i + 1) = std::sin(proj(i)) * scale;
  }
  return out;
}

Mat rff_features_batch(const RffBank& bank, const Mat& x) {
  Mat out(x.rows(), 2 * bank.n());
  for (int r = 0; r < x.rows(); ++r) out.row(r) = rff_features(bank, x.row(r).transpose());
  return out;
}

Vec ebm_rep(const RffBank& bank, const Vec& phi_e, const Vec& u) {
  Vec zeta = rff_features(bank, phi_e);
  if (u.size() != zeta.size()) throw std::invalid_argument("ebm rep: u dimension mismatch");
  double denom = zeta.dot(u);
  if (std::abs(denom) < 1e-8)
    throw NumericalError("ebm rep: degenerate normalizer <zeta, u> near zero");
  return zeta / denom;
}

// --- perturbation kernel -----------------------------------------------------

Mat perturb(const Mat& x, double beta, std::mt19937_64& rng) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("perturb: beta must lie in (0,1)");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat out(x.rows(), x.cols());
  double a = std::sqrt(1.0 - beta);
  double b = std::sqrt(beta);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) out(r, c) = a * x(r, c) + b * gauss(rng);
  return out;
}

Mat score_target(const Mat& x_tilde, const Mat& x, double beta) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("score target: beta must lie in (0,1]");
  if (x_tilde.rows() != x.rows() || x_tilde.cols() != x.cols())
    throw std::invalid_argument("score target: shape mismatch");
  return -(x_tilde - std::sqrt(1.0 - beta) * x) / beta;
}

void check_beta_in_schedule(double beta, const std::vector<double>& schedule) {
  for (double b : schedule)
    if (std::abs(b - beta) < 1e-12) return;
  throw std::invalid_argument("noise level not in schedule");
}

// --- losses ------------------------------------------------------------------

Tape::Val scl_loss(Tape& t, Tape::Val phi, Tape::Val mu_pos, Tape::Val mu_neg, double lambda) {
  const Mat& p = t.value(phi);
  if (p.rows() == 0) throw std::invalid_argument("scl loss: empty batch");
  if (t.value(mu_pos).rows() != p.rows() || t.value(mu_neg).rows() != p.rows())
    throw std::invalid_argument("scl loss: batch size mismatch");
  Tape::Val neg_sq = t.mean(t.square(t.row_dot(phi, mu_neg)));
  Tape::Val pos = t.mean(t.row_dot(phi, mu_pos));
  return t.add(t.scale(neg_sq, lambda), t.scale(pos, -2.0));
}

Tape::Val reparam_sample(Tape& t, Tape::Val mean, Tape::Val logstd, const Mat& eps) {
  Tape::Val std = t.exp_(t.clamp(logstd, -20.0, 2.0));
  return t.add(mean, t.mul(std, t.constant(eps)));
}

Tape::Val gaussian_kl(Tape& t, Tape::Val q_mean, Tape::Val q_logstd, Tape::Val p_mean,
                      Tape::Val p_logstd) {
  Tape::Val ql = t.clamp(q_logstd, -20.0, 2.0);
  Tape::Val pl = t.clamp(p_logstd, -20.0, 2.0);
  // KL = sum_d [ pl - ql + (exp(2 ql) + (qm - pm)^2) / (2 exp(2 pl)) - 1/2 ]
  Tape::Val var_q = t.exp_(t.scale(ql, 2.0));
  Tape::Val inv_var_p = t.exp_(t.scale(pl, -2.0));
  Tape::Val diff_sq = t.square(t.sub(q_mean, p_mean));
  Tape::Val quad = t.scale(t.mul(t.add(var_q, diff_sq), inv_var_p), 0.5);
  Tape::Val terms = t.add_scalar(t.add(t.sub(pl, ql), quad), -0.5);
  return t.row_sum(terms);
}

Tape::Val elbo_loss(Tape& t, Tape::Val q_mean, Tape::Val q_logstd, Tape::Val p_mean,
                    Tape::Val p_logstd, Tape::Val decoder_mean, const Mat& target, double beta) {
  const Mat& dm = t.value(decoder_mean);
  if (dm.rows() == 0) throw std::invalid_argument("elbo loss: empty batch");
  if (dm.rows() != target.rows() || dm.cols() != target.cols())
    throw std::invalid_argument("elbo loss: decoder/target shape mismatch");
  const double dim = static_cast<double>(target.cols());
  // Unit-variance Gaussian decoder log-density.
  Tape::Val sq_err = t.row_sum(t.square(t.sub(decoder_mean, t.constant(target))));
  Tape::Val log_lik =
      t.add_scalar(t.scale(sq_err, -0.5), -0.5 * dim * std::log(2.0 * M_PI));
  Tape::Val kl = gaussian_kl(t, q_mean, q_logstd, p_mean, p_logstd);
  Tape::Val loss = t.mean(t.sub(t.scale(kl, beta), log_lik));
  if (!std::isfinite(t.scalar(loss))) throw NumericalError("elbo loss: non-finite value");
  return loss;
}

Tape::Val csm_loss(Tape& t, Tape::Val phi, Tape::Val score_packed, const Mat& target, int dim_s) {
  const Mat& p = t.value(phi);
  if (p.rows() == 0) throw std::invalid_argument("csm loss: empty batch");
  if (target.rows() != p.rows() || target.cols() != dim_s)
    throw std::invalid_argument("csm loss: target shape mismatch");
  Tape::Val pred = t.batched_vecmat(phi, score_packed, dim_s);
  return t.mean(t.square(t.sub(pred, t.constant(target))));
}

namespace {

Tape::Val ranking_loss(Tape& t, Tape::Val pos, Tape::Val neg,
                       RepLearnerConfig::DenominatorMode mode) {
  const Mat& pv = t.value(pos);
  const Mat& nv = t.value(neg);
  if (pv.rows() == 0) throw std::invalid_argument("ranking loss: empty batch");
  if (pv.cols() != 1) throw std::invalid_argument("ranking loss: positive logits must be B x 1");
  if (nv.rows() != pv.rows() || nv.cols() < 1)
    throw std::invalid_argument("ranking loss: need at least one negative per datum");
  Tape::Val den = (mode == RepLearnerConfig::DenominatorMode::include_positive)
                      ? t.logsumexp_rows(t.concat_cols(pos, neg))
                      : t.logsumexp_rows(neg);
  return t.mean(t.sub(den, pos));
}

}  // namespace

Tape::Val rp_nce_loss(Tape& t, Tape::Val pos_logits, Tape::Val neg_logits,
                      RepLearnerConfig::DenominatorMode mode) {
  return ranking_loss(t, pos_logits, neg_logits, mode);
}

Tape::Val rp_ncel_loss(Tape& t, Tape::Val pos_dots, Tape::Val neg_dots,
                       RepLearnerConfig::DenominatorMode mode, double penalty_weight,
                       double margin) {
  Tape::Val pos = t.activation(pos_dots, Act::softplus);
  Tape::Val neg = t.activation(neg_dots, Act::softplus);
  Tape::Val loss = ranking_loss(t, pos, neg, mode);
  Tape::Val all_dots = t.concat_cols(pos_dots, neg_dots);
  Tape::Val penalty =
      t.mean(t.activation(t.scale(t.add_scalar(all_dots, -margin), -1.0), Act::relu));
  return t.add(loss, t.scale(penalty, penalty_weight));
}

}  // namespace specrl
