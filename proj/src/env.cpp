#include "specrl/env.hpp"

#include <cmath>

namespace specrl {

ContinuousEnv::Step PendulumContinuous::step(const Vec& action) {
  if (action.size() != 1) throw std::invalid_argument("pendulum: action must be 1-dim");
  double torque = clampd(action(0), -1.0, 1.0) * env_.params().max_torque;
  auto r = env_.step(torque);
  Step out;
  out.obs = r.obs;
  out.reward = r.reward;
  out.done = false;
  out.truncated = r.done;  // horizon only
  return out;
}

RunningNormalizer::RunningNormalizer(int dim) {
  if (dim < 1) throw std::invalid_argument("normalizer: dim must be positive");
  mean_ = Vec::Zero(dim);
  m2_ = Vec::Zero(dim);
}

void RunningNormalizer::update(const Vec& x) {
  if (frozen_) return;
  if (x.size() != mean_.size()) throw std::invalid_argument("normalizer: dimension mismatch");
  ++count_;
  Vec delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Vec RunningNormalizer::stddev() const {
  if (count_ < 2) return Vec::Ones(mean_.size());
  Vec var = m2_ / static_cast<double>(count_ - 1);
  return var.cwiseMax(1e-8).cwiseSqrt();
}

Vec RunningNormalizer::normalize(const Vec& x) const {
  if (x.size() != mean_.size()) throw std::invalid_argument("normalizer: dimension mismatch");
  return (x - mean_).cwiseQuotient(stddev());
}

Mat RunningNormalizer::normalize_rows(const Mat& x) const {
  Vec sd = stddev();
  Mat out(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    out.row(r) = (x.row(r).transpose() - mean_).cwiseQuotient(sd).transpose();
  return out;
}

Mat RunningNormalizer::to_matrix() const {
  Mat m(3, mean_.size());
  m.row(0).setConstant(static_cast<double>(count_));
  m.row(1) = mean_.transpose();
  m.row(2) = m2_.transpose();
  return m;
}

RunningNormalizer RunningNormalizer::from_matrix(const Mat& m) {
  if (m.rows() != 3 || m.cols() < 1)
    throw std::invalid_argument("normalizer: bad statistics matrix");
  RunningNormalizer out(static_cast<int>(m.cols()));
  out.count_ = static_cast<std::int64_t>(m(0, 0));
  out.mean_ = m.row(1).transpose();
  out.m2_ = m.row(2).transpose();
  return out;
}

}  // namespace specrl
