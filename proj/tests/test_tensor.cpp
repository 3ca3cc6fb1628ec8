#include <doctest.h>

#include <cmath>
#include <sstream>

#include "specrl/nn.hpp"

using namespace specrl;

TEST_CASE("mlp with hand-set weights computes tanh(2x + 1)") {
  MlpSpec spec{{1, 1, 1}, Act::tanh_, false};
  ParamSet ps;
  std::mt19937_64 rng(0);
  mlp_init(ps, "f", spec, rng);
  ps.value("f.W0") << 2.0;
  ps.value("f.b0") << 1.0;
  ps.value("f.W1") << 1.0;
  ps.value("f.b1") << 0.0;
  Mat x = Mat::Zero(1, 1);
  CHECK(mlp_eval(ps, "f", spec, x)(0, 0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
  x(0, 0) = 0.5;
  CHECK(mlp_eval(ps, "f", spec, x)(0, 0) == doctest::Approx(std::tanh(2.0)).epsilon(1e-12));

  // Tape forward agrees with plain evaluation.
  Tape t;
  Tape::Val out = mlp_forward(t, ps, "f", spec, t.constant(x));
  CHECK(t.value(out)(0, 0) == doctest::Approx(std::tanh(2.0)).epsilon(1e-12));
}

TEST_CASE("backward: d/dp p^2 at p = 3 is 6") {
  ParamSet ps;
  ps.add("p", Mat::Constant(1, 1, 3.0));
  Tape t;
  Tape::Val loss = t.sum(t.square(t.param(ps, "p")));
  t.backward(loss);
  CHECK(t.scalar(loss) == doctest::Approx(9.0));
  CHECK(ps.grad("p")(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward through constants leaves parameters untouched") {
  ParamSet ps;
  ps.add("p", Mat::Constant(1, 1, 2.0));
  Tape t;
  Tape::Val loss = t.sum(t.constant(Mat::Constant(2, 2, 5.0)));
  t.backward(loss);
  CHECK(ps.grad("p").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient check: quadratic form is exact to roundoff") {
  ParamSet ps;
  std::mt19937_64 rng(11);
  Mat init(2, 3);
  std::normal_distribution<double> g;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) init(r, c) = g(rng);
  ps.add("w", init);
  auto loss = [](ParamSet& p) {
    p.zero_grads();
    Tape t;
    Tape::Val l = t.sum(t.square(t.param(p, "w")));
    t.backward(l);
    return t.scalar(l);
  };
  CHECK(grad_check(loss, ps, 1e-5, rng) < 1e-8);
}

TEST_CASE("gradient check: elu and tanh mlps") {
  std::mt19937_64 rng(13);
  for (Act act : {Act::elu, Act::tanh_}) {
    MlpSpec spec{{3, 5, 2}, act, false};
    ParamSet ps;
    mlp_init(ps, "m", spec, rng);
    Mat x(4, 3);
    std::normal_distribution<double> g;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 3; ++c) x(r, c) = g(rng);
    auto loss = [&](ParamSet& p) {
      p.zero_grads();
      Tape t;
      Tape::Val out = mlp_forward(t, p, "m", spec, t.constant(x));
      Tape::Val l = t.mean(t.square(out));
      t.backward(l);
      return t.scalar(l);
    };
    CHECK(grad_check(loss, ps, 1e-5, rng) < 1e-4);
  }
}

TEST_CASE("gradient check: composite ops (logsumexp, gather, reshape, batched product)") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  ParamSet ps;
  Mat a(4, 6);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) a(r, c) = g(rng);
  ps.add("a", a);
  Mat phi(2, 3);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) phi(r, c) = g(rng);
  ps.add("phi", phi);
  auto loss = [&](ParamSet& p) {
    p.zero_grads();
    Tape t;
    Tape::Val pa = t.param(p, "a");
    Tape::Val rows = t.gather_rows(pa, {0, 2});                 // 2 x 6
    Tape::Val packed = t.reshape(rows, 2, 6);                   // no-op reshape
    Tape::Val prod = t.batched_vecmat(t.param(p, "phi"), packed, 2);  // 2 x 2
    Tape::Val lse = t.logsumexp_rows(t.activation(prod, Act::softplus));
    Tape::Val l = t.mean(t.add(lse, t.row_dot(prod, prod)));
    t.backward(l);
    return t.scalar(l);
  };
  CHECK(grad_check(loss, ps, 1e-6, rng) < 1e-4);
}

TEST_CASE("op values: logsumexp, min, reshape, batched product") {
  Tape t;
  Mat m(2, 3);
  m << 1.0, 2.0, 3.0, -1.0, -1.0, -1.0;
  Mat lse = t.value(t.logsumexp_rows(t.constant(m)));
  CHECK(lse(0, 0) ==
        doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0))).epsilon(1e-12));
  CHECK(lse(1, 0) == doctest::Approx(-1.0 + std::log(3.0)).epsilon(1e-12));

  Mat a(1, 2), b(1, 2);
  a << 1.0, 5.0;
  b << 2.0, 4.0;
  Mat mn = t.value(t.min_elem(t.constant(a), t.constant(b)));
  CHECK(mn(0, 0) == 1.0);
  CHECK(mn(0, 1) == 4.0);

  Mat r(1, 4);
  r << 1, 2, 3, 4;
  Mat rr = t.value(t.reshape(t.constant(r), 2, 2));
  CHECK(rr(0, 1) == 2.0);
  CHECK(rr(1, 0) == 3.0);

  // out(b, j) = sum_i phi(b, i) * packed(b, i*m + j), with d = 2, m = 2.
  Mat phi(1, 2), packed(1, 4);
  phi << 2.0, 3.0;
  packed << 1.0, 0.0, 0.0, 1.0;
  Mat out = t.value(t.batched_vecmat(t.constant(phi), t.constant(packed), 2));
  CHECK(out(0, 0) == 2.0);
  CHECK(out(0, 1) == 3.0);
}

TEST_CASE("optimizer: zero gradients leave parameters unchanged") {
  ParamSet ps;
  ps.add("p", Mat::Constant(2, 2, 1.25));
  Adam opt(ps, 0.1);
  ps.zero_grads();
  opt.step(ps);
  CHECK((ps.value("p").array() == 1.25).all());
}

TEST_CASE("optimizer: converges on (p - 3)^2 within 100 steps") {
  ParamSet ps;
  ps.add("p", Mat::Zero(1, 1));
  Adam opt(ps, 0.1);
  for (int i = 0; i < 100; ++i) {
    ps.zero_grads();
    Tape t;
    Tape::Val l = t.sum(t.square(t.add_scalar(t.param(ps, "p"), -3.0)));
    t.backward(l);
    opt.step(ps);
  }
  CHECK(std::abs(ps.value("p")(0, 0) - 3.0) < 0.1);
}

TEST_CASE("optimizer: non-finite gradient raises a numerical error") {
  ParamSet ps;
  ps.add("p", Mat::Zero(1, 1));
  Adam opt(ps, 0.1);
  ps.zero_grads();
  ps.grad("p")(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(ps), NumericalError);
}

TEST_CASE("residual block with zero second matrix is the identity") {
  MlpSpec spec{{4, 4, 4}, Act::elu, true};
  ParamSet ps;
  std::mt19937_64 rng(23);
  mlp_init(ps, "r", spec, rng);
  ps.value("r.U0").setZero();                    // residual block becomes x + 0
  ps.value("r.W1") = Mat::Identity(4, 4);        // final affine layer passes through
  ps.value("r.b1").setZero();
  Mat x(3, 4);
  std::normal_distribution<double> g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) x(r, c) = g(rng);
  CHECK((mlp_eval(ps, "r", spec, x) - x).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("residual mlp gradient check") {
  std::mt19937_64 rng(29);
  MlpSpec spec{{3, 3, 3, 2}, Act::elu, true};
  ParamSet ps;
  mlp_init(ps, "r", spec, rng);
  Mat x(5, 3);
  std::normal_distribution<double> g;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 3; ++c) x(r, c) = g(rng);
  auto loss = [&](ParamSet& p) {
    p.zero_grads();
    Tape t;
    Tape::Val l = t.mean(t.square(mlp_forward(t, p, "r", spec, t.constant(x))));
    t.backward(l);
    return t.scalar(l);
  };
  CHECK(grad_check(loss, ps, 1e-5, rng) < 1e-4);
}

TEST_CASE("parameter checkpoint round-trips bit-exactly") {
  ParamSet ps;
  std::mt19937_64 rng(31);
  mlp_init(ps, "net", MlpSpec{{3, 8, 2}, Act::elu, false}, rng);
  std::stringstream ss;
  ps.save(ss);
  ParamSet back;
  back.load(ss);
  REQUIRE(back.size() == ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(back.names()[i] == ps.names()[i]);
    CHECK((back.value_at(int(i)) - ps.value_at(int(i))).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("seeded initialization is deterministic") {
  MlpSpec spec{{4, 6, 1}, Act::elu, false};
  ParamSet a, b;
  std::mt19937_64 r1(7), r2(7);
  mlp_init(a, "n", spec, r1);
  mlp_init(b, "n", spec, r2);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK((a.value_at(int(i)) - b.value_at(int(i))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training loop is bit-deterministic under a fixed seed") {
  auto run = [](std::uint64_t seed) {
    MlpSpec spec{{2, 4, 1}, Act::tanh_, false};
    ParamSet ps;
    std::mt19937_64 rng(seed);
    mlp_init(ps, "n", spec, rng);
    Adam opt(ps, 1e-2);
    std::normal_distribution<double> g;
    for (int it = 0; it < 20; ++it) {
      Mat x(8, 2), y(8, 1);
      for (int r = 0; r < 8; ++r) {
        x(r, 0) = g(rng);
        x(r, 1) = g(rng);
        y(r, 0) = x(r, 0) - x(r, 1);
      }
      ps.zero_grads();
      Tape t;
      Tape::Val out = mlp_forward(t, ps, "n", spec, t.constant(x));
      Tape::Val l = t.mean(t.square(t.sub(out, t.constant(y))));
      t.backward(l);
      opt.step(ps);
    }
    return ps.value("n.W0");
  };
  Mat a = run(5), b = run(5), c = run(6);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("backward rejects non-scalar outputs") {
  Tape t;
  Tape::Val v = t.constant(Mat::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(v), std::logic_error);
}
