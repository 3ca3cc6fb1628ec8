#include "specrl/pomdp.hpp"

#include <cmath>

namespace specrl {

ObservationWindow::ObservationWindow(int l, int obs_dim, int act_dim)
    : l_(l), obs_dim_(obs_dim), act_dim_(act_dim) {
  if (l < 1) throw std::invalid_argument("window: need L >= 1");
  if (obs_dim < 1 || act_dim < 0) throw std::invalid_argument("window: bad dimensions");
}

void ObservationWindow::reset(const Vec& o0) {
  if (o0.size() != obs_dim_) throw std::invalid_argument("window: observation dimension mismatch");
  obs_.assign(l_, o0);
  acts_.assign(l_ > 0 ? l_ - 1 : 0, Vec::Zero(act_dim_));
  started_ = true;
  ended_ = false;
}

void ObservationWindow::push(const Vec& o, const Vec& a_prev) {
  if (!started_) throw std::logic_error("window: push before reset");
  if (ended_) throw std::logic_error("window: push across episode boundary without reset");
  if (o.size() != obs_dim_ || a_prev.size() != act_dim_)
    throw std::invalid_argument("window: dimension mismatch");
  obs_.erase(obs_.begin());
  obs_.push_back(o);
  if (l_ > 1) {
    acts_.erase(acts_.begin());
    acts_.push_back(a_prev);
  }
}

Vec ObservationWindow::concatenated() const {
  if (!started_) throw std::logic_error("window: read before reset");
  Vec x(x_dim());
  int at = 0;
  for (int i = 0; i < l_; ++i) {
    x.segment(at, obs_dim_) = obs_[i];
    at += obs_dim_;
    if (i + 1 < l_) {
      x.segment(at, act_dim_) = acts_[i];
      at += act_dim_;
    }
  }
  return x;
}

double l_step_reward(const std::vector<double>& rewards, double gamma, int l) {
  if (static_cast<int>(rewards.size()) != l)
    throw std::invalid_argument("l-step reward: expected exactly " + std::to_string(l) +
                                " rewards");
  double out = 0.0;
  double g = 1.0;
  for (double r : rewards) {
    out += g * r;
    g *= gamma;
  }
  return out;
}

MaskedEnv::MaskedEnv(ContinuousEnv& base, std::vector<int> keep)
    : base_(base), keep_(std::move(keep)) {
  if (keep_.empty()) throw std::invalid_argument("masked env: keep list empty");
  for (int i : keep_)
    if (i < 0 || i >= base_.obs_dim())
      throw std::invalid_argument("masked env: coordinate out of range");
}

Vec MaskedEnv::mask(const Vec& o) const {
  Vec out(keep_.size());
  for (std::size_t i = 0; i < keep_.size(); ++i) out(i) = o(keep_[i]);
  return out;
}

Vec MaskedEnv::reset() { return mask(base_.reset()); }

ContinuousEnv::Step MaskedEnv::step(const Vec& action) {
  Step s = base_.step(action);
  s.obs = mask(s.obs);
  return s;
}

WindowedEnv::WindowedEnv(ContinuousEnv& base, int l)
    : base_(base), window_(l, base.obs_dim(), base.action_dim()) {}

Vec WindowedEnv::reset() {
  window_.reset(base_.reset());
  return window_.concatenated();
}

ContinuousEnv::Step WindowedEnv::step(const Vec& action) {
  Step s = base_.step(action);
  window_.push(s.obs, action);
  Step out = s;
  out.obs = window_.concatenated();
  if (s.done || s.truncated) window_.mark_episode_end();
  return out;
}

TransitionAssembler::TransitionAssembler(int l, double gamma) : l_(l), gamma_(gamma) {
  if (l < 1) throw std::invalid_argument("assembler: need L >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("assembler: bad gamma");
}

void TransitionAssembler::begin_episode() {
  xs_.clear();
  as_.clear();
  rewards_.clear();
  in_episode_ = true;
}

std::vector<Transition> TransitionAssembler::push(const Vec& x, const Vec& a, double reward,
                                                  const Vec& x_next, bool done, bool truncated) {
  if (!in_episode_) throw std::logic_error("assembler: push outside an episode");
  xs_.push_back(x);
  as_.push_back(a);
  rewards_.push_back(reward);
  std::vector<Transition> out;
  const int n = static_cast<int>(xs_.size());
  if (n >= l_) {
    int t = n - l_;
    Transition tr;
    tr.state = xs_[t];
    tr.action = as_[t];
    tr.reward = l_step_reward({rewards_.begin() + t, rewards_.end()}, gamma_, l_);
    tr.next_state = x_next;
    tr.done = done;
    tr.episode_end = done || truncated;
    out.push_back(std::move(tr));
  }
  if (done || truncated) in_episode_ = false;
  return out;
}

}  // namespace specrl
