#include "specrl/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace specrl {

namespace {
constexpr double kStochasticTol = 1e-12;
}

void TabularMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("mdp: empty state or action space");
  if (transition.rows() != n_states * n_actions || transition.cols() != n_states)
    throw std::invalid_argument("mdp: transition shape mismatch");
  if (reward.rows() != n_states || reward.cols() != n_actions)
    throw std::invalid_argument("mdp: reward shape mismatch");
  if (init_dist.size() != n_states) throw std::invalid_argument("mdp: init_dist shape mismatch");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("mdp: gamma must lie in [0, 1)");
  for (int r = 0; r < transition.rows(); ++r) {
    if (transition.row(r).minCoeff() < -kStochasticTol)
      throw std::invalid_argument("mdp: negative transition probability in row " + std::to_string(r));
    if (std::abs(transition.row(r).sum() - 1.0) > kStochasticTol)
      throw std::invalid_argument("mdp: non-stochastic transition row " + std::to_string(r));
  }
  if (init_dist.minCoeff() < -kStochasticTol || std::abs(init_dist.sum() - 1.0) > kStochasticTol)
    throw std::invalid_argument("mdp: init_dist is not a probability vector");
}

void TabularPolicy::validate() const {
  for (int s = 0; s < probs.rows(); ++s) {
    if (probs.row(s).minCoeff() < -kStochasticTol || std::abs(probs.row(s).sum() - 1.0) > kStochasticTol)
      throw std::invalid_argument("policy: row " + std::to_string(s) + " is not a distribution");
  }
}

Mat state_transition(const TabularMDP& mdp, const TabularPolicy& policy) {
  Mat p(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(mdp.n_states);
    for (int a = 0; a < mdp.n_actions; ++a) row += policy.probs(s, a) * mdp.transition.row(mdp.row(s, a));
    p.row(s) = row;
  }
  return p;
}

namespace {

// (S*A) x (S*A) operator P^pi[(s,a) -> (s',a')] = P(s'|s,a) pi(a'|s').
Mat state_action_transition(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int n = mdp.n_states * mdp.n_actions;
  Mat p = Mat::Zero(n, n);
  for (int r = 0; r < n; ++r)
    for (int s2 = 0; s2 < mdp.n_states; ++s2)
      for (int a2 = 0; a2 < mdp.n_actions; ++a2)
        p(r, mdp.row(s2, a2)) = mdp.transition(r, s2) * policy.probs(s2, a2);
  return p;
}

}  // namespace

Mat policy_evaluation_q(const TabularMDP& mdp, const TabularPolicy& policy, double tol) {
  mdp.validate();
  policy.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("policy_evaluation_q: tol must be positive");

  const int n = mdp.n_states * mdp.n_actions;
  Vec r_flat(n);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) r_flat(mdp.row(s, a)) = mdp.reward(s, a);

  Mat ppi = state_action_transition(mdp, policy);
  Vec q;
  if (mdp.n_states <= 2000) {
    Mat system = Mat::Identity(n, n) - mdp.gamma * ppi;
    q = system.partialPivLu().solve(r_flat);
  } else {
    q = Vec::Zero(n);
    for (int it = 0; it < 10000000; ++it) {
      Vec next = r_flat + mdp.gamma * (ppi * q);
      double delta = (next - q).lpNorm<Eigen::Infinity>();
      q = next;
      if (delta * mdp.gamma / (1.0 - mdp.gamma) <= tol) break;
    }
  }

  double residual = (q - (r_flat + mdp.gamma * (ppi * q))).lpNorm<Eigen::Infinity>();
  if (residual > tol)
    throw NumericalError("policy_evaluation_q: residual " + std::to_string(residual) + " above tol");

  Mat out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) out(s, a) = q(mdp.row(s, a));
  return out;
}

Vec state_values(const TabularMDP& mdp, const TabularPolicy& policy, const Mat& q) {
  Vec v(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) v(s) = (policy.probs.row(s).array() * q.row(s).array()).sum();
  return v;
}

Mat occupancy_measure(const TabularMDP& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate();
  const int n = mdp.n_states * mdp.n_actions;
  Vec d0pi(n);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) d0pi(mdp.row(s, a)) = mdp.init_dist(s) * policy.probs(s, a);

  Mat ppi = state_action_transition(mdp, policy);
  Mat system = Mat::Identity(n, n) - mdp.gamma * ppi.transpose();
  Eigen::PartialPivLU<Mat> lu(system);
  if (std::abs(lu.determinant()) < 1e-300)
    throw NumericalError("occupancy_measure: singular stationarity system");
  Vec d = lu.solve((1.0 - mdp.gamma) * d0pi);

  Mat out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) out(s, a) = d(mdp.row(s, a));
  return out;
}

ValueIterationResult value_iteration(const Mat& transition, const Mat& reward, double gamma,
                                     double tol, int max_iters) {
  const int n_states = static_cast<int>(reward.rows());
  const int n_actions = static_cast<int>(reward.cols());
  Vec v = Vec::Zero(n_states);
  Mat q(n_states, n_actions);
  for (int it = 0; it < max_iters; ++it) {
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a)
        q(s, a) = reward(s, a) + gamma * transition.row(s * n_actions + a).dot(v);
    Vec next = q.rowwise().maxCoeff();
    double delta = (next - v).lpNorm<Eigen::Infinity>();
    v = next;
    if (delta * gamma / std::max(1e-16, 1.0 - gamma) <= tol) break;
  }
  ValueIterationResult result;
  result.q = q;
  result.policy.resize(n_states);
  for (int s = 0; s < n_states; ++s) {
    int best = 0;
    q.row(s).maxCoeff(&best);
    result.policy[s] = best;
  }
  return result;
}

// --- text serialization -----------------------------------------------------

void TabularMDP::save(std::ostream& out) const {
  out << std::setprecision(17);
  out << n_states << ' ' << n_actions << ' ' << gamma << '\n';
  for (int s = 0; s < n_states; ++s) out << init_dist(s) << (s + 1 == n_states ? '\n' : ' ');
  for (int r = 0; r < transition.rows(); ++r)
    for (int s2 = 0; s2 < n_states; ++s2) out << transition(r, s2) << (s2 + 1 == n_states ? '\n' : ' ');
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) out << reward(s, a) << (a + 1 == n_actions ? '\n' : ' ');
}

TabularMDP TabularMDP::load(std::istream& in) {
  TabularMDP mdp;
  if (!(in >> mdp.n_states >> mdp.n_actions >> mdp.gamma))
    throw std::invalid_argument("mdp load: bad header");
  mdp.init_dist.resize(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    if (!(in >> mdp.init_dist(s))) throw std::invalid_argument("mdp load: truncated init_dist");
  mdp.transition.resize(mdp.n_states * mdp.n_actions, mdp.n_states);
  for (int r = 0; r < mdp.transition.rows(); ++r)
    for (int s2 = 0; s2 < mdp.n_states; ++s2)
      if (!(in >> mdp.transition(r, s2))) throw std::invalid_argument("mdp load: truncated transition");
  mdp.reward.resize(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      if (!(in >> mdp.reward(s, a))) throw std::invalid_argument("mdp load: truncated reward");
  mdp.validate();
  return mdp;
}

void TabularMDP::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("mdp save: cannot open " + path);
  save(out);
}

TabularMDP TabularMDP::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mdp load: cannot open " + path);
  return load(in);
}

// --- replay buffer ----------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t rng_seed)
    : capacity_(capacity), rng_(rng_seed) {
  if (capacity_ == 0) throw std::invalid_argument("replay buffer: zero capacity");
}

void ReplayBuffer::push(Transition t) {
  if (entries_.size() == capacity_) {
    entries_.pop_front();
    ++first_id_;
  }
  entries_.push_back(std::move(t));
}

const Transition& ReplayBuffer::at(std::uint64_t id) const {
  if (!contains(id)) throw std::out_of_range("replay buffer: id evicted or unseen");
  return entries_[id - first_id_];
}

std::vector<std::uint64_t> ReplayBuffer::sample_ids(std::size_t batch_size) {
  if (entries_.empty()) throw std::runtime_error("replay buffer empty");
  std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
  std::vector<std::uint64_t> ids(batch_size);
  for (auto& id : ids) id = first_id_ + pick(rng_);
  return ids;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size) {
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (auto id : sample_ids(batch_size)) out.push_back(at(id));
  return out;
}

// --- pendulum ---------------------------------------------------------------

double wrap_angle(double theta) {
  double w = std::remainder(theta, 2.0 * M_PI);
  if (w <= -M_PI) w += 2.0 * M_PI;
  return w;
}

PendulumEnv::PendulumEnv(const Params& params, std::uint64_t seed) : params_(params), rng_(seed) {
  reset();
}

Vec PendulumEnv::reset() {
  if (params_.downward_start) {
    angle_ = M_PI;
    vel_ = 0.0;
  } else {
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    angle_ = ang(rng_);
    vel_ = speed(rng_);
  }
  step_count_ = 0;
  return observation();
}

Vec PendulumEnv::observation() const {
  Vec obs(kObsDim);
  obs << std::cos(angle_), std::sin(angle_), vel_;
  return obs;
}

PendulumEnv::StepResult PendulumEnv::step(double torque) {
  const Params& p = params_;
  double u = clampd(torque, -p.max_torque, p.max_torque);
  double theta = wrap_angle(angle_);
  double reward = -(theta * theta + 0.1 * vel_ * vel_ + 0.001 * u * u);

  double accel = 3.0 * p.gravity / (2.0 * p.length) * std::sin(theta) +
                 3.0 / (p.mass * p.length * p.length) * u;
  vel_ = clampd(vel_ + accel * p.dt, -p.max_speed, p.max_speed);
  angle_ = wrap_angle(angle_ + vel_ * p.dt);
  ++step_count_;

  StepResult out;
  out.obs = observation();
  out.reward = reward;
  out.done = step_count_ >= p.horizon;
  return out;
}

// --- random instances -------------------------------------------------------

namespace {
Mat random_stochastic(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = unif(rng);
    m.row(r) /= m.row(r).sum();
  }
  return m;
}
}  // namespace

TabularMDP random_mdp(int n_states, int n_actions, double gamma, std::mt19937_64& rng) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition = random_stochastic(n_states * n_actions, n_states, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = gauss(rng);
  mdp.init_dist = random_stochastic(1, n_states, rng).row(0).transpose();
  mdp.validate();
  return mdp;
}

TabularPolicy random_policy(int n_states, int n_actions, std::mt19937_64& rng) {
  TabularPolicy pol;
  pol.probs = random_stochastic(n_states, n_actions, rng);
  pol.validate();
  return pol;
}

TabularMDP random_low_rank_mdp(int n_states, int n_actions, int rank, double gamma,
                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  Mat left(n_states * n_actions, rank), right(rank, n_states);
  for (int r = 0; r < left.rows(); ++r)
    for (int c = 0; c < rank; ++c) left(r, c) = unif(rng);
  for (int r = 0; r < rank; ++r)
    for (int c = 0; c < n_states; ++c) right(r, c) = unif(rng);
  Mat p = left * right;
  for (int r = 0; r < p.rows(); ++r) p.row(r) /= p.row(r).sum();

  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition = p;
  std::normal_distribution<double> gauss(0.0, 1.0);
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = gauss(rng);
  mdp.init_dist = random_stochastic(1, n_states, rng).row(0).transpose();
  mdp.validate();
  return mdp;
}

}  // namespace specrl
