// Windowed observations for L-decodable partially observed environments:
// sliding observation/action windows, L-step reward aggregation, coordinate
// masking, and assembly of windowed training transitions.
#pragma once

#include "specrl/env.hpp"

namespace specrl {

// Sliding window x_t = (o_{t-L+1}, a_{t-L+1}, ..., o_t). At episode start the
// missing observations are copies of o_0 and the missing actions are zeros.
class ObservationWindow {
 public:
  ObservationWindow(int l, int obs_dim, int act_dim);

  void reset(const Vec& o0);
  // Appends (a_prev, o). Throws std::logic_error on a push after an episode
  // ended without an intervening reset, or before the first reset.
  void push(const Vec& o, const Vec& a_prev);
  void mark_episode_end() { ended_ = true; }

  Vec concatenated() const;  // x_t, dimension x_dim()
  int x_dim() const { return l_ * obs_dim_ + (l_ - 1) * act_dim_; }
  int window_length() const { return l_; }

 private:
  int l_, obs_dim_, act_dim_;
  std::vector<Vec> obs_, acts_;  // obs_ has l_ entries, acts_ has l_ - 1
  bool started_ = false;
  bool ended_ = false;
};

// sum_{i=0}^{L-1} gamma^i r_i. Throws when rewards.size() != l.
double l_step_reward(const std::vector<double>& rewards, double gamma, int l);

// Keeps only the listed observation coordinates (e.g. hide pendulum velocity).
class MaskedEnv : public ContinuousEnv {
 public:
  MaskedEnv(ContinuousEnv& base, std::vector<int> keep);

  int obs_dim() const override { return static_cast<int>(keep_.size()); }
  int action_dim() const override { return base_.action_dim(); }
  Vec reset() override;
  Step step(const Vec& action) override;

 private:
  Vec mask(const Vec& o) const;
  ContinuousEnv& base_;
  std::vector<int> keep_;
};

// Presents window states x_t as the observation of a ContinuousEnv.
class WindowedEnv : public ContinuousEnv {
 public:
  WindowedEnv(ContinuousEnv& base, int l);

  int obs_dim() const override { return window_.x_dim(); }
  int action_dim() const override { return base_.action_dim(); }
  Vec reset() override;
  Step step(const Vec& action) override;

 private:
  ContinuousEnv& base_;
  ObservationWindow window_;
};

// Turns the per-step stream (x_t, a_t, r_t, x_{t+1}, flags) into windowed
// training transitions {x_t, a_t, sum gamma^i r_{t+i}, x_{t+L}} once L steps
// of lookahead exist; incomplete episode tails are dropped. The consumer
// should train with discount gamma^L.
class TransitionAssembler {
 public:
  TransitionAssembler(int l, double gamma);

  void begin_episode();
  // Returns zero or one assembled transitions.
  std::vector<Transition> push(const Vec& x, const Vec& a, double reward, const Vec& x_next,
                               bool done, bool truncated);

  int window_length() const { return l_; }

 private:
  int l_;
  double gamma_;
  bool in_episode_ = false;
  std::vector<Vec> xs_, as_;
  std::vector<double> rewards_;
};

}  // namespace specrl
