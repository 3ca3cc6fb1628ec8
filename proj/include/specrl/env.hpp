// Continuous-control environment interface, the pendulum adapter, and the
// running observation normalizer.
#pragma once

#include <memory>

#include "specrl/mdp.hpp"

namespace specrl {

// Actions are vectors in [-1, 1]^action_dim; implementations scale internally.
class ContinuousEnv {
 public:
  struct Step {
    Vec obs;
    double reward = 0.0;
    bool done = false;       // true terminal
    bool truncated = false;  // time limit
  };

  virtual ~ContinuousEnv() = default;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vec reset() = 0;
  virtual Step step(const Vec& action) = 0;
};

// Pendulum swing-up with torque = action * max_torque. Never terminates;
// episodes end by truncation at the horizon.
class PendulumContinuous : public ContinuousEnv {
 public:
  PendulumContinuous(const PendulumEnv::Params& params, std::uint64_t seed)
      : env_(params, seed) {}

  int obs_dim() const override { return PendulumEnv::kObsDim; }
  int action_dim() const override { return 1; }
  Vec reset() override { return env_.reset(); }
  Step step(const Vec& action) override;

  const PendulumEnv& inner() const { return env_; }

 private:
  PendulumEnv env_;
};

// Welford running mean / standard deviation over observation coordinates.
// normalize() uses the current statistics; freeze() pins them (evaluation).
class RunningNormalizer {
 public:
  explicit RunningNormalizer(int dim);

  void update(const Vec& x);
  Vec normalize(const Vec& x) const;
  Mat normalize_rows(const Mat& x) const;
  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }
  bool frozen() const { return frozen_; }

  std::int64_t count() const { return count_; }
  const Vec& mean() const { return mean_; }
  Vec stddev() const;

  // Statistics as a 3 x dim matrix (count row, mean, m2) for checkpoints.
  Mat to_matrix() const;
  static RunningNormalizer from_matrix(const Mat& m);

 private:
  std::int64_t count_ = 0;
  Vec mean_, m2_;
  bool frozen_ = false;
};

}  // namespace specrl
