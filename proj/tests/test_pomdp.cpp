#include <doctest.h>

#include <cmath>

#include "specrl/bench.hpp"
#include "specrl/pomdp.hpp"

using namespace specrl;

TEST_CASE("observation window: padding at episode start") {
  ObservationWindow w(3, 2, 1);
  CHECK(w.x_dim() == 3 * 2 + 2 * 1);
  Vec o0(2);
  o0 << 1.0, 2.0;
  w.reset(o0);
  Vec x = w.concatenated();
  // (o0, 0, o0, 0, o0): missing history is padded with o0 and zero actions.
  Vec expected(8);
  expected << 1, 2, 0, 1, 2, 0, 1, 2;
  CHECK((x - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("observation window: sliding and interleaving") {
  ObservationWindow w(2, 1, 1);
  Vec o0 = Vec::Constant(1, 5.0);
  w.reset(o0);
  Vec o1 = Vec::Constant(1, 6.0), a0 = Vec::Constant(1, 0.5);
  w.push(o1, a0);
  Vec x = w.concatenated();
  Vec expected(3);
  expected << 5.0, 0.5, 6.0;
  CHECK((x - expected).cwiseAbs().maxCoeff() == 0.0);
  Vec o2 = Vec::Constant(1, 7.0), a1 = Vec::Constant(1, -0.25);
  w.push(o2, a1);
  expected << 6.0, -0.25, 7.0;
  CHECK((w.concatenated() - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("observation window: guards against misuse") {
  ObservationWindow w(2, 1, 1);
  Vec o = Vec::Zero(1), a = Vec::Zero(1);
  CHECK_THROWS_AS(w.push(o, a), std::logic_error);  // push before reset
  w.reset(o);
  w.push(o, a);
  w.mark_episode_end();
  CHECK_THROWS_AS(w.push(o, a), std::logic_error);  // push across the boundary
  w.reset(o);                                       // reset re-arms the window
  CHECK_NOTHROW(w.push(o, a));
}

TEST_CASE("window with length one is the raw observation") {
  ObservationWindow w(1, 3, 1);
  Vec o(3);
  o << 1, 2, 3;
  w.reset(o);
  CHECK((w.concatenated() - o).cwiseAbs().maxCoeff() == 0.0);
  Vec o2(3);
  o2 << 4, 5, 6;
  w.push(o2, Vec::Zero(1));
  CHECK((w.concatenated() - o2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multi-step reward aggregation") {
  CHECK(l_step_reward({1, 1, 1, 1}, 1.0, 4) == doctest::Approx(4.0));
  CHECK(l_step_reward({1, 1}, 0.5, 2) == doctest::Approx(1.5));
  CHECK(l_step_reward({1, 2, 3}, 0.9, 3) == doctest::Approx(5.23).epsilon(1e-12));
  CHECK_THROWS_AS(l_step_reward({1, 2}, 0.9, 3), std::invalid_argument);
}

TEST_CASE("masked environment projects observation coordinates") {
  PendulumEnv::Params p;
  p.downward_start = true;
  PendulumContinuous base(p, 0);
  MaskedEnv masked(base, {0, 1});
  CHECK(masked.obs_dim() == 2);
  Vec o = masked.reset();
  CHECK(o(0) == doctest::Approx(-1.0));
  auto s = masked.step(Vec::Constant(1, 0.5));
  Vec full = base.inner().observation();
  CHECK(s.obs(0) == full(0));
  CHECK(s.obs(1) == full(1));
  CHECK_THROWS_AS(MaskedEnv(base, {0, 7}), std::invalid_argument);
}

TEST_CASE("windowed environment tracks the base env and re-arms on reset") {
  PendulumEnv::Params p;
  p.horizon = 3;
  PendulumContinuous base(p, 5);
  WindowedEnv env(base, 2);
  CHECK(env.obs_dim() == 2 * 3 + 1);
  Vec x0 = env.reset();
  CHECK(x0.head(3) == x0.tail(3));  // padded with o0
  Vec a = Vec::Constant(1, 0.3);
  auto s1 = env.step(a);
  CHECK(s1.obs(3) == 0.3);  // the action slot between the two observations
  env.step(a);
  auto s3 = env.step(a);
  CHECK(s3.truncated);
  CHECK_NOTHROW(env.reset());
  CHECK_NOTHROW(env.step(a));
}

TEST_CASE("assembler with window one passes transitions through unchanged") {
  TransitionAssembler asm1(1, 0.99);
  asm1.begin_episode();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 5; ++i) {
    Vec x = Vec::NullaryExpr(3, [&](int) { return g(rng); });
    Vec a = Vec::Constant(1, 0.1 * i);
    Vec xn = Vec::NullaryExpr(3, [&](int) { return g(rng); });
    bool last = (i == 4);
    auto out = asm1.push(x, a, double(i), xn, false, last);
    REQUIRE(out.size() == 1);
    CHECK((out[0].state - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((out[0].next_state - xn).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out[0].reward == double(i));
    CHECK(out[0].done == false);
    CHECK(out[0].episode_end == last);
  }
}

TEST_CASE("assembler aggregates L-step rewards and drops incomplete tails") {
  const double gamma = 0.9;
  TransitionAssembler asm2(2, gamma);
  asm2.begin_episode();
  std::vector<Vec> xs;
  for (int i = 0; i <= 4; ++i) xs.push_back(Vec::Constant(2, double(i)));
  std::vector<Transition> got;
  for (int t = 0; t < 4; ++t) {
    bool last = (t == 3);
    auto out = asm2.push(xs[t], Vec::Constant(1, 0.0), 1.0 + t, xs[t + 1], false, last);
    for (auto& tr : out) got.push_back(tr);
  }
  // 4 steps with L = 2 yield 3 transitions; the final step has no lookahead.
  REQUIRE(got.size() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(got[t].state(0) == double(t));
    CHECK(got[t].next_state(0) == double(t + 2));
    CHECK(got[t].reward == doctest::Approx((1.0 + t) + gamma * (2.0 + t)).epsilon(1e-12));
  }
  CHECK(got[2].episode_end);
  CHECK_FALSE(got[0].episode_end);
  // The episode ended; pushing again without begin_episode is an error.
  CHECK_THROWS_AS(asm2.push(xs[0], Vec::Zero(1), 0.0, xs[1], false, false), std::logic_error);
}

TEST_CASE("hidden velocity is decodable from a two-step window") {
  // Hide the pendulum's velocity, keep (cos, sin); a window of two successive
  // observations plus the action determines the velocity through the dynamics.
  // A least-squares decoder on quadratic features of the window must explain
  // almost all of its variance.
  PendulumEnv::Params p;
  PendulumContinuous base(p, 42);
  MaskedEnv masked(base, {0, 1});
  WindowedEnv env(masked, 2);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec> windows;
  std::vector<double> vels;
  for (int ep = 0; ep < 10; ++ep) {
    env.reset();
    for (int t = 0; t < 80; ++t) {
      auto s = env.step(Vec::Constant(1, u(rng)));
      windows.push_back(s.obs);
      vels.push_back(base.inner().angular_velocity());
      if (s.done || s.truncated) break;
    }
  }
  const int n = static_cast<int>(windows.size());
  const int raw = static_cast<int>(windows[0].size());
  // Features: 1, window coordinates, and all pairwise products.
  const int dim = 1 + raw + raw * (raw + 1) / 2;
  Mat f(n, dim);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    const Vec& w = windows[i];
    int at = 0;
    f(i, at++) = 1.0;
    for (int a = 0; a < raw; ++a) f(i, at++) = w(a);
    for (int a = 0; a < raw; ++a)
      for (int b = a; b < raw; ++b) f(i, at++) = w(a) * w(b);
    y(i) = vels[i];
  }
  Vec coef = (f.transpose() * f + 1e-8 * Mat::Identity(dim, dim))
                 .ldlt()
                 .solve(f.transpose() * y);
  double ss_res = (y - f * coef).squaredNorm();
  double ss_tot = (y.array() - y.mean()).square().sum();
  double r2 = 1.0 - ss_res / ss_tot;
  CHECK(r2 > 0.99);
}

TEST_CASE("a single masked observation does not determine the velocity") {
  PendulumEnv::Params p;
  PendulumContinuous base(p, 43);
  MaskedEnv masked(base, {0, 1});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec> obs;
  std::vector<double> vels;
  for (int ep = 0; ep < 10; ++ep) {
    masked.reset();
    for (int t = 0; t < 80; ++t) {
      auto s = masked.step(Vec::Constant(1, u(rng)));
      obs.push_back(s.obs);
      vels.push_back(base.inner().angular_velocity());
      if (s.done || s.truncated) break;
    }
  }
  const int n = static_cast<int>(obs.size());
  Mat f(n, 6);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    double c = obs[i](0), s = obs[i](1);
    f.row(i) << 1.0, c, s, c * c, c * s, s * s;
    y(i) = vels[i];
  }
  Vec coef = (f.transpose() * f + 1e-8 * Mat::Identity(6, 6)).ldlt().solve(f.transpose() * y);
  double r2 = 1.0 - (y - f * coef).squaredNorm() / (y.array() - y.mean()).square().sum();
  CHECK(r2 < 0.5);
}
