#include "specrl/bonus.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace specrl {

BonusState::BonusState(Kernel kernel, int feature_dim, double ridge_lambda, double alpha)
    : kernel_(kernel), dim_(feature_dim), lambda_(ridge_lambda), alpha_(alpha) {
  if (feature_dim < 1) throw std::invalid_argument("bonus: feature_dim must be positive");
  if (!(ridge_lambda > 0.0)) throw std::invalid_argument("bonus: ridge lambda must be positive");
  moment_ = Mat::Zero(dim_, dim_);
}

double BonusState::kernel_eval(const Vec& a, const Vec& b) const {
  if (kernel_ == Kernel::linear) return a.dot(b);
  return std::exp(-0.5 * (a - b).squaredNorm());
}

void BonusState::insert(const Vec& feature) {
  if (feature.size() != dim_) throw std::invalid_argument("bonus: feature dimension mismatch");
  data_.push_back(feature);
  if (kernel_ == Kernel::linear) moment_ += feature * feature.transpose();
}

double BonusState::bonus(const Vec& x) const {
  if (x.size() != dim_) throw std::invalid_argument("bonus: feature dimension mismatch");
  if (kernel_ == Kernel::linear) {
    // Primal form: alpha * sqrt(x' (sum x x' + lambda I)^{-1} x), equal to the
    // Gram route by the matrix inversion identity.
    Mat reg = moment_ + lambda_ * Mat::Identity(dim_, dim_);
    double quad = x.dot(reg.ldlt().solve(x));
    return alpha_ * std::sqrt(std::max(quad, 0.0));
  }
  return bonus_gram(x);
}

double BonusState::bonus_gram(const Vec& x) const {
  if (x.size() != dim_) throw std::invalid_argument("bonus: feature dimension mismatch");
  const int n = static_cast<int>(data_.size());
  double kxx = kernel_eval(x, x);
  if (n == 0) return alpha_ / std::sqrt(lambda_) * std::sqrt(std::max(kxx, 0.0));
  Mat gram(n, n);
  Vec kx(n);
  for (int i = 0; i < n; ++i) {
    kx(i) = kernel_eval(data_[i], x);
    for (int j = i; j < n; ++j) gram(i, j) = gram(j, i) = kernel_eval(data_[i], data_[j]);
  }
  Mat reg = gram + lambda_ * Mat::Identity(n, n);
  Eigen::LLT<Mat> llt(reg);
  if (llt.info() != Eigen::Success) {
    reg += 1e-10 * Mat::Identity(n, n);
    llt.compute(reg);
    if (llt.info() != Eigen::Success)
      throw NumericalError("bonus: regularized Gram matrix is not positive definite");
  }
  double quad = kxx - kx.dot(llt.solve(kx));
  return alpha_ / std::sqrt(lambda_) * std::sqrt(std::max(quad, 0.0));
}

OptimisticPlan optimistic_plan(const Mat& phi, const Mat& mu, const Mat& reward, double gamma,
                               const BonusState& bonus,
                               const std::function<Vec(int, int)>& feature_of) {
  const int n_states = static_cast<int>(mu.rows());
  const int n_actions = static_cast<int>(reward.cols());
  if (phi.rows() != n_states * n_actions || reward.rows() != n_states)
    throw std::invalid_argument("optimistic plan: shape mismatch");

  OptimisticPlan out;
  out.p_hat = (phi * mu.transpose()).cwiseMax(0.0);
  for (int r = 0; r < out.p_hat.rows(); ++r) {
    double mass = out.p_hat.row(r).sum();
    if (mass < 1e-12)
      throw std::invalid_argument("optimistic plan: transition row " + std::to_string(r) +
                                  " has no mass after clipping");
    out.p_hat.row(r) /= mass;
  }
  out.r_opt = reward;
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) out.r_opt(s, a) += bonus.bonus(feature_of(s, a));

  auto vi = value_iteration(out.p_hat, out.r_opt, gamma, 1e-8);
  out.policy.probs = Mat::Zero(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) out.policy.probs(s, vi.policy[s]) = 1.0;
  return out;
}

TabularMDP combination_lock(int n_states, double gamma) {
  if (n_states < 2) throw std::invalid_argument("combination lock: need at least 2 states");
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = 2;
  mdp.gamma = gamma;
  mdp.transition = Mat::Zero(n_states * 2, n_states);
  mdp.reward = Mat::Zero(n_states, 2);
  for (int s = 0; s < n_states - 1; ++s) {
    mdp.transition(mdp.row(s, 0), s + 1) = 1.0;  // correct action advances
    mdp.transition(mdp.row(s, 1), 0) = 1.0;      // wrong action resets
  }
  int goal = n_states - 1;
  for (int a = 0; a < 2; ++a) {
    mdp.transition(mdp.row(goal, a), goal) = 1.0;  // absorbing
    mdp.reward(goal, a) = 1.0;
  }
  mdp.init_dist = Vec::Zero(n_states);
  mdp.init_dist(0) = 1.0;
  mdp.validate();
  return mdp;
}

namespace {

int sample_categorical(const Vec& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u <= acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

LockResult lock_episodes_optimistic(const TabularMDP& lock, int horizon, int max_episodes,
                                    double ridge_lambda, double alpha, std::mt19937_64& rng) {
  const int S = lock.n_states, A = lock.n_actions;
  const int goal = S - 1;
  Mat counts = Mat::Zero(S * A, S);
  Mat reward_sum = Mat::Zero(S, A);
  BonusState bonus(BonusState::Kernel::linear, S * A, ridge_lambda, alpha);
  auto one_hot = [&](int s, int a) {
    Vec e = Vec::Zero(S * A);
    e(lock.row(s, a)) = 1.0;
    return e;
  };

  LockResult res;
  for (int ep = 1; ep <= max_episodes; ++ep) {
    // Empirical model from counts; unvisited rows uniform, unseen rewards 0.
    Mat p_hat(S * A, S);
    Mat r_hat = Mat::Zero(S, A);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        int row = lock.row(s, a);
        double n = counts.row(row).sum();
        if (n > 0.0) {
          p_hat.row(row) = counts.row(row) / n;
          r_hat(s, a) = reward_sum(s, a) / n;
        } else {
          p_hat.row(row).setConstant(1.0 / S);
        }
      }
    }
    TabularMDP emp = lock;
    emp.transition = p_hat;
    SpectralFactorization fac = exact_factorization(emp, std::min(S, S * A));
    OptimisticPlan plan = optimistic_plan(fac.phi, fac.mu, r_hat, lock.gamma, bonus, one_hot);

    int s = sample_categorical(lock.init_dist, rng);
    for (int t = 0; t < horizon; ++t) {
      int a = sample_categorical(plan.policy.probs.row(s).transpose(), rng);
      int s2 = sample_categorical(lock.transition.row(lock.row(s, a)).transpose(), rng);
      counts(lock.row(s, a), s2) += 1.0;
      reward_sum(s, a) += lock.reward(s, a);
      bonus.insert(one_hot(s, a));
      s = s2;
      if (s == goal) {
        res.episodes = ep;
        res.reached = true;
        return res;
      }
    }
  }
  res.episodes = max_episodes;
  return res;
}

LockResult lock_episodes_random(const TabularMDP& lock, int horizon, int max_episodes,
                                std::mt19937_64& rng) {
  const int goal = lock.n_states - 1;
  std::uniform_int_distribution<int> act(0, lock.n_actions - 1);
  LockResult res;
  for (int ep = 1; ep <= max_episodes; ++ep) {
    int s = sample_categorical(lock.init_dist, rng);
    for (int t = 0; t < horizon; ++t) {
      int a = act(rng);
      s = sample_categorical(lock.transition.row(lock.row(s, a)).transpose(), rng);
      if (s == goal) {
        res.episodes = ep;
        res.reached = true;
        return res;
      }
    }
  }
  res.episodes = max_episodes;
  return res;
}

}  // namespace specrl
