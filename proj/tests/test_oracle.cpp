#include <doctest.h>

#include <Eigen/SVD>

#include "specrl/spectral_oracle.hpp"

using namespace specrl;

namespace {

Vec uniform_rho(const TabularMDP& m) {
  return Vec::Constant(m.n_states * m.n_actions, 1.0 / (m.n_states * m.n_actions));
}

TabularPolicy uniform_policy(int s, int a) {
  TabularPolicy p;
  p.probs = Mat::Constant(s, a, 1.0 / a);
  return p;
}

}  // namespace

TEST_CASE("factorization: identity transition has unit singular values") {
  TabularMDP m;
  m.n_states = 2;
  m.n_actions = 1;
  m.transition = Mat::Identity(2, 2);
  m.reward = Mat::Zero(2, 1);
  m.gamma = 0.9;
  m.init_dist = Vec::Constant(2, 0.5);
  CHECK(transition_rank(m) == 2);
  auto fac = exact_factorization(m, 2);
  CHECK(fac.singular_values(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fac.singular_values(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((fac.reconstruct() - m.transition).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("factorization: uniform transition is rank one with constant features") {
  TabularMDP m;
  m.n_states = 3;
  m.n_actions = 2;
  m.transition = Mat::Constant(6, 3, 1.0 / 3.0);
  m.reward = Mat::Zero(3, 2);
  m.gamma = 0.9;
  m.init_dist = Vec::Constant(3, 1.0 / 3.0);
  CHECK(transition_rank(m) == 1);
  auto fac = exact_factorization(m, 1);
  for (int r = 1; r < 6; ++r)
    CHECK(fac.phi(r, 0) == doctest::Approx(fac.phi(0, 0)).epsilon(1e-12));
}

TEST_CASE("factorization: full rank reconstructs, truncation error is the tail energy") {
  std::mt19937_64 rng(7);
  TabularMDP m = random_mdp(4, 2, 0.9, rng);
  int full = transition_rank(m);
  auto fac = exact_factorization(m, full);
  CHECK((fac.reconstruct() - m.transition).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::JacobiSVD<Mat> svd(m.transition);
  Vec sv = svd.singularValues();
  for (int d = 1; d < full; ++d) {
    auto trunc = exact_factorization(m, d);
    double err = (trunc.reconstruct() - m.transition).norm();
    double tail = std::sqrt(sv.tail(sv.size() - d).squaredNorm());
    CHECK(err == doctest::Approx(tail).epsilon(1e-10));
  }
}

TEST_CASE("linear value fit: exact at full rank with linear rewards") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    TabularMDP m = random_linear_reward_mdp(4, 2, 0.9, rng);
    TabularPolicy pol = random_policy(4, 2, rng);
    Mat q = policy_evaluation_q(m, pol);
    auto fac = exact_factorization(m, transition_rank(m));
    CHECK(fit_q_weights(fac, q).residual < 1e-8);
  }
}

TEST_CASE("linear value fit: gamma zero recovers the reward weights") {
  std::mt19937_64 rng(13);
  TabularMDP m = random_mdp(4, 2, 0.9, rng);
  auto fac = exact_factorization(m, transition_rank(m));
  REQUIRE(fac.phi.cols() == 4);
  Vec theta(4);
  theta << 0.3, -1.2, 0.5, 2.0;
  Vec r_flat = fac.phi * theta;
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 2; ++a) m.reward(s, a) = r_flat(m.row(s, a));
  m.gamma = 0.0;
  Mat q = policy_evaluation_q(m, uniform_policy(4, 2));
  auto fit = fit_q_weights(fac, q);
  CHECK(fit.residual < 1e-8);
  CHECK((fit.eta - theta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("linear value fit: truncated features leave a residual") {
  std::mt19937_64 rng(17);
  TabularMDP m = random_linear_reward_mdp(4, 2, 0.9, rng);
  TabularPolicy pol = random_policy(4, 2, rng);
  Mat q = policy_evaluation_q(m, pol);
  auto trunc = exact_factorization(m, 1);
  CHECK(fit_q_weights(trunc, q).residual > 1e-8);
}

TEST_CASE("variational objective: zero features give zero value") {
  std::mt19937_64 rng(19);
  TabularMDP m = random_mdp(3, 2, 0.9, rng);
  Mat phi = Mat::Zero(6, 2), nu = Mat::Zero(3, 2);
  CHECK(scaled_svd_objective(m, uniform_rho(m), phi, nu) == 0.0);
}

TEST_CASE("variational objective: scalar case is 2x - x^2") {
  TabularMDP m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = Mat::Ones(1, 1);
  m.reward = Mat::Zero(1, 1);
  m.gamma = 0.5;
  m.init_dist = Vec::Ones(1);
  Vec rho = Vec::Ones(1);
  Mat nu = Mat::Ones(1, 1);
  for (double x : {0.0, 0.5, 1.0, 2.0}) {
    Mat phi = Mat::Constant(1, 1, x);
    CHECK(scaled_svd_objective(m, rho, phi, nu) ==
          doctest::Approx(2.0 * x - x * x).epsilon(1e-12));
  }
}

TEST_CASE("variational objective: maximized by the density ratio") {
  std::mt19937_64 rng(23);
  TabularMDP m = random_mdp(3, 2, 0.9, rng);
  Vec rho = uniform_rho(m);
  Vec marg = Vec::Zero(3);
  for (int r = 0; r < 6; ++r) marg += rho(r) * m.transition.row(r).transpose();
  Mat ratio(6, 3);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 3; ++c) ratio(r, c) = m.transition(r, c) / marg(c);
  Mat nu = Mat::Identity(3, 3);
  double best = scaled_svd_objective(m, rho, ratio, nu);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    Mat pert = ratio;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 3; ++c) pert(r, c) += 0.1 * g(rng);
    CHECK(scaled_svd_objective(m, rho, pert, nu) < best);
  }
}

TEST_CASE("variational objective rejects non-positive weighting") {
  std::mt19937_64 rng(29);
  TabularMDP m = random_mdp(3, 2, 0.9, rng);
  Vec rho = uniform_rho(m);
  rho(0) = 0.0;
  CHECK_THROWS_AS(scaled_svd_objective(m, rho, Mat::Zero(6, 1), Mat::Zero(3, 1)),
                  std::invalid_argument);
}

TEST_CASE("scaled kernel: entries match the weighted formula") {
  std::mt19937_64 rng(31);
  TabularMDP m = random_mdp(4, 2, 0.9, rng);
  Vec rho = uniform_rho(m);
  Vec marg = Vec::Zero(4);
  for (int r = 0; r < 8; ++r) marg += rho(r) * m.transition.row(r).transpose();
  Mat k = scaled_transition_kernel(m, rho);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(k(r, c) ==
            doctest::Approx(std::sqrt(rho(r)) * m.transition(r, c) / std::sqrt(marg(c)))
                .epsilon(1e-12));
  Mat u = top_left_singular_subspace(k, 2);
  CHECK((u.transpose() * u - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("principal angles: identical and orthogonal subspaces") {
  Mat a = Mat::Identity(4, 2);
  Mat b = a;
  b.col(0) *= -3.0;  // same span, different basis
  CHECK(max_principal_angle_deg(a, b) < 1e-6);
  Mat c = Mat::Zero(4, 2);
  c(2, 0) = 1.0;
  c(3, 1) = 1.0;
  CHECK(max_principal_angle_deg(a, c) == doctest::Approx(90.0).epsilon(1e-9));
}

TEST_CASE("decomposition table: successor features of the identity chain") {
  TabularMDP m;
  m.n_states = 3;
  m.n_actions = 1;
  m.transition = Mat::Identity(3, 3);
  m.reward = Mat::Zero(3, 1);
  m.gamma = 0.5;
  m.init_dist = Vec::Constant(3, 1.0 / 3.0);
  Mat rep = table1_reps(m, uniform_policy(3, 1), Table1Kind::successor, 3);
  // (I - 0.5 I)^{-1} = 2I; left singular vectors are the canonical basis.
  CHECK(max_principal_angle_deg(rep, Mat::Identity(3, 3)) < 1e-8);
}

TEST_CASE("decomposition table: successor matches an independent resolvent SVD") {
  std::mt19937_64 rng(37);
  TabularMDP m = random_mdp(5, 2, 0.8, rng);
  TabularPolicy pol = random_policy(5, 2, rng);
  Mat ppi = state_transition(m, pol);
  Mat resolvent = (Mat::Identity(5, 5) - m.gamma * ppi).partialPivLu().solve(Mat::Identity(5, 5));
  Eigen::JacobiSVD<Mat> svd(resolvent);
  Mat rep = table1_reps(m, pol, Table1Kind::successor, 3);
  // Left singular vectors of the resolvent are eigenvectors of R R^T; checking
  // the eigen-residual is robust even when singular values nearly coincide.
  Mat gram = resolvent * resolvent.transpose();
  double energy = 0.0;
  for (int c = 0; c < 3; ++c) {
    Vec v = rep.col(c);
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-10));
    Vec w = gram * v;
    double lambda = v.dot(w);
    CHECK((w - lambda * v).cwiseAbs().maxCoeff() < 1e-9);
    energy += lambda;
  }
  Vec sv = svd.singularValues();
  CHECK(energy == doctest::Approx(sv.head(3).squaredNorm()).epsilon(1e-10));
}

TEST_CASE("decomposition table: krylov with k = 1 is the one-step reward image") {
  std::mt19937_64 rng(41);
  TabularMDP m = random_mdp(4, 2, 0.9, rng);
  TabularPolicy pol = random_policy(4, 2, rng);
  Mat rep = table1_reps(m, pol, Table1Kind::krylov, 1);
  Mat ppi = state_transition(m, pol);
  Vec r_state = (pol.probs.array() * m.reward.array()).rowwise().sum();
  CHECK((rep.col(0) - ppi * r_state).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decomposition table: laplacian eigenvectors solve the symmetrized operator") {
  std::mt19937_64 rng(43);
  TabularMDP m = random_mdp(4, 2, 0.9, rng);
  TabularPolicy pol = random_policy(4, 2, rng);
  Mat rep = table1_reps(m, pol, Table1Kind::laplacian, 2);
  // Recompute the symmetrized operator and verify the columns are eigenvectors.
  Mat ppi = state_transition(m, pol);
  Mat a = Mat::Identity(4, 4) - ppi.transpose();
  a.row(0).setOnes();
  Vec b = Vec::Zero(4);
  b(0) = 1.0;
  Vec stat = a.partialPivLu().solve(b);
  Mat lam = stat.asDiagonal();
  Mat sym = lam * ppi + ppi.transpose() * lam;
  for (int c = 0; c < 2; ++c) {
    Vec v = rep.col(c);
    Vec mv = sym * v;
    double lambda = v.dot(mv);
    CHECK((mv - lambda * v).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("decomposition table: laplacian rejects reducible chains naming components") {
  TabularMDP m;
  m.n_states = 2;
  m.n_actions = 1;
  m.transition = Mat::Identity(2, 2);  // two absorbing states
  m.reward = Mat::Zero(2, 1);
  m.gamma = 0.9;
  m.init_dist = Vec::Constant(2, 0.5);
  CHECK_THROWS_WITH_AS(table1_reps(m, uniform_policy(2, 1), Table1Kind::laplacian, 1),
                       doctest::Contains("components"), std::invalid_argument);
}

TEST_CASE("occupancy factorization: exact at full rank, zero for a single state") {
  std::mt19937_64 rng(47);
  TabularMDP m = random_mdp(4, 2, 0.9, rng);
  TabularPolicy pol = random_policy(4, 2, rng);
  auto fac = exact_factorization(m, transition_rank(m));
  CHECK(occupancy_factorization_check(m, pol, fac) < 1e-8);

  TabularMDP one;
  one.n_states = 1;
  one.n_actions = 1;
  one.transition = Mat::Ones(1, 1);
  one.reward = Mat::Zero(1, 1);
  one.gamma = 0.5;
  one.init_dist = Vec::Ones(1);
  auto fac1 = exact_factorization(one, 1);
  CHECK(occupancy_factorization_check(one, uniform_policy(1, 1), fac1) < 1e-12);
}

TEST_CASE("low-rank construction respects the requested rank") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    TabularMDP m = random_low_rank_mdp(6, 2, 3, 0.9, rng);
    CHECK_NOTHROW(m.validate());
    CHECK(transition_rank(m) <= 3);
  }
}
