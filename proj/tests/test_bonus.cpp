#include <doctest.h>

#include "specrl/bonus.hpp"

using namespace specrl;

TEST_CASE("linear bonus: empty dataset, decay, and directional independence") {
  BonusState b(BonusState::Kernel::linear, 3, 1.0, 1.0);
  Vec e0 = Vec::Unit(3, 0), e1 = Vec::Unit(3, 1);
  CHECK(b.bonus(e0) == doctest::Approx(1.0).epsilon(1e-12));
  double prev = b.bonus(e0);
  for (int i = 0; i < 20; ++i) {
    b.insert(e0);
    double cur = b.bonus(e0);
    CHECK(cur < prev);
    CHECK(cur == doctest::Approx(b.bonus_gram(e0)).epsilon(1e-8));
    prev = cur;
  }
  // After n unit insertions along e0: alpha sqrt(1 / (n + lambda)).
  CHECK(prev == doctest::Approx(std::sqrt(1.0 / 21.0)).epsilon(1e-10));
  // The orthogonal direction never lost any bonus.
  CHECK(b.bonus(e1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("linear bonus: alpha and ridge scaling") {
  Vec x = Vec::Unit(2, 0);
  BonusState a(BonusState::Kernel::linear, 2, 1.0, 2.5);
  CHECK(a.bonus(x) == doctest::Approx(2.5).epsilon(1e-12));
  BonusState l(BonusState::Kernel::linear, 2, 4.0, 1.0);
  // alpha / sqrt(lambda) * sqrt(x'x - x'x / ... ) = sqrt(x' (lambda I)^{-1} x).
  CHECK(l.bonus(x) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("linear bonus: primal and Gram routes agree on random data") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  BonusState b(BonusState::Kernel::linear, 4, 0.7, 1.3);
  for (int i = 0; i < 15; ++i) {
    Vec x = Vec::NullaryExpr(4, [&](int) { return g(rng); });
    b.insert(x);
    Vec q = Vec::NullaryExpr(4, [&](int) { return g(rng); });
    CHECK(b.bonus(q) == doctest::Approx(b.bonus_gram(q)).epsilon(1e-8));
  }
}

TEST_CASE("gaussian bonus: shrinks near data, stays high far away") {
  BonusState b(BonusState::Kernel::gaussian, 1, 1.0, 1.0);
  Vec x = Vec::Zero(1), far = Vec::Constant(1, 8.0);
  double before = b.bonus(x);
  CHECK(before == doctest::Approx(1.0).epsilon(1e-12));
  b.insert(x);
  double near = b.bonus(x);
  CHECK(near < before);
  CHECK(b.bonus(far) == doctest::Approx(1.0).epsilon(1e-6));
  b.insert(x);
  CHECK(b.bonus(x) < near);
}

TEST_CASE("optimistic planning: zero bonus recovers the true optimal policy") {
  std::mt19937_64 rng(5);
  TabularMDP m = random_mdp(5, 2, 0.9, rng);
  auto fac = exact_factorization(m, transition_rank(m));
  BonusState zero(BonusState::Kernel::linear, 10, 1.0, 0.0);  // alpha = 0
  auto feature_of = [&](int s, int a) {
    Vec e = Vec::Zero(10);
    e(s * 2 + a) = 1.0;
    return e;
  };
  OptimisticPlan plan = optimistic_plan(fac.phi, fac.mu, m.reward, m.gamma, zero, feature_of);
  auto vi = value_iteration(m.transition, m.reward, m.gamma);
  for (int s = 0; s < 5; ++s) {
    CHECK(plan.policy.probs(s, vi.policy[s]) == doctest::Approx(1.0));
    CHECK(plan.p_hat.row(s * 2).sum() == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK((plan.r_opt - m.reward).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("optimistic planning: bonus enters through the reward") {
  std::mt19937_64 rng(7);
  TabularMDP m = random_mdp(3, 2, 0.9, rng);
  auto fac = exact_factorization(m, transition_rank(m));
  BonusState b(BonusState::Kernel::linear, 6, 1.0, 1.0);
  auto feature_of = [&](int s, int a) {
    Vec e = Vec::Zero(6);
    e(s * 2 + a) = 1.0;
    return e;
  };
  // Visit (0, 0) heavily so its bonus is small relative to the rest.
  for (int i = 0; i < 50; ++i) b.insert(feature_of(0, 0));
  OptimisticPlan plan = optimistic_plan(fac.phi, fac.mu, m.reward, m.gamma, b, feature_of);
  CHECK(plan.r_opt(0, 0) - m.reward(0, 0) ==
        doctest::Approx(b.bonus(feature_of(0, 0))).epsilon(1e-12));
  CHECK(plan.r_opt(1, 1) - m.reward(1, 1) ==
        doctest::Approx(b.bonus(feature_of(1, 1))).epsilon(1e-12));
  CHECK(plan.r_opt(1, 1) - m.reward(1, 1) > plan.r_opt(0, 0) - m.reward(0, 0));
}

TEST_CASE("combination lock: structure and the optimal path") {
  TabularMDP lock = combination_lock(5, 0.99);
  CHECK(lock.n_states == 5);
  CHECK(lock.n_actions == 2);
  // Action 0 advances, action 1 resets, the goal is absorbing and pays 1.
  CHECK(lock.p(0, 0, 1) == 1.0);
  CHECK(lock.p(2, 1, 0) == 1.0);
  CHECK(lock.p(4, 0, 4) == 1.0);
  CHECK(lock.p(4, 1, 4) == 1.0);
  CHECK(lock.reward(4, 0) == 1.0);
  CHECK(lock.reward(3, 0) == 0.0);
  CHECK(lock.init_dist(0) == 1.0);
  auto vi = value_iteration(lock.transition, lock.reward, lock.gamma);
  for (int s = 0; s < 5; ++s) CHECK(vi.policy[s] == 0);
}

TEST_CASE("combination lock: optimistic exploration beats random exploration") {
  TabularMDP lock = combination_lock(8, 0.99);
  std::vector<int> opt, rnd;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 r1(100 + seed), r2(200 + seed);
    auto o = lock_episodes_optimistic(lock, 16, 1000, 1.0, 1.0, r1);
    auto r = lock_episodes_random(lock, 16, 1000, r2);
    CHECK(o.reached);
    opt.push_back(o.episodes);
    rnd.push_back(r.episodes);
  }
  auto median = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  CHECK(2 * median(opt) <= median(rnd));
}
