#include "specrl/agent.hpp"

#include <cmath>
#include <fstream>

namespace specrl {

void AgentConfig::validate() const {
  rep.validate();
  if (hidden < 1) throw std::invalid_argument("agent config: hidden must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("agent config: gamma must lie in (0,1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("agent config: tau must lie in (0,1]");
  if (batch_size < 1) throw std::invalid_argument("agent config: batch_size must be positive");
  if (n_step < 1) throw std::invalid_argument("agent config: n_step must be positive");
  if (actor_interval < 1)
    throw std::invalid_argument("agent config: actor_interval must be positive");
  if (buffer_capacity < 1) throw std::invalid_argument("agent config: empty buffer capacity");
}

CriticKind AgentConfig::critic_kind() const {
  switch (learner) {
    case Learner::td3: return CriticKind::mlp;
    case Learner::scl: return CriticKind::linear;
    case Learner::lvrep: return CriticKind::latent_variable;
    case Learner::diffsr: return CriticKind::linear;
    case Learner::ctrlsr: return CriticKind::ebm;
  }
  throw std::logic_error("unknown learner");
}

const char* learner_name(AgentConfig::Learner learner) {
  switch (learner) {
    case AgentConfig::Learner::td3: return "td3";
    case AgentConfig::Learner::scl: return "scl";
    case AgentConfig::Learner::lvrep: return "lvrep";
    case AgentConfig::Learner::diffsr: return "diffsr";
    case AgentConfig::Learner::ctrlsr: return "ctrlsr";
  }
  throw std::logic_error("unknown learner");
}

AgentConfig::Learner learner_from_name(const std::string& name) {
  if (name == "td3") return AgentConfig::Learner::td3;
  if (name == "scl") return AgentConfig::Learner::scl;
  if (name == "lvrep") return AgentConfig::Learner::lvrep;
  if (name == "diffsr") return AgentConfig::Learner::diffsr;
  if (name == "ctrlsr") return AgentConfig::Learner::ctrlsr;
  throw std::invalid_argument("unknown learner: " + name);
}

namespace {

Mat gaussian_mat(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = gauss(rng);
  return m;
}

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

Agent::Agent(const AgentConfig& cfg, int obs_dim, int action_dim, std::uint64_t master_seed)
    : cfg_(cfg),
      obs_dim_(obs_dim),
      act_dim_(action_dim),
      normalizer_(obs_dim),
      buffer_(cfg.buffer_capacity, substream_seed(master_seed, "buffer")),
      noise_rng_(make_rng(master_seed, "noise")),
      neg_rng_(make_rng(master_seed, "negatives")) {
  cfg_.validate();
  if (obs_dim < 1 || action_dim < 1) throw std::invalid_argument("agent: bad env dimensions");
  schedule_ = cfg_.rep.noise_schedule.empty() ? geometric_noise_schedule(25)
                                              : cfg_.rep.noise_schedule;

  const int h = cfg_.hidden;
  const int d = cfg_.rep.rep_dim;
  const int o = obs_dim_;
  const int a = act_dim_;

  actor_spec_ = {{o, h, h, a}, Act::elu, false};
  phi_spec_ = {{o + a, h, h, d}, Act::elu, false};
  prior_spec_ = {{o + a, h, h, 2 * d}, Act::elu, false};
  enc_spec_ = {{2 * o + a, h, h, 2 * d}, Act::elu, false};
  dec_spec_ = {{d, h, h, o}, Act::elu, false};
  kappa_spec_ = {{o + 1, h, h, d * o}, Act::elu, false};
  switch (cfg_.learner) {
    case AgentConfig::Learner::scl: nu_spec_ = {{o, h, h, d}, Act::elu, false}; break;
    case AgentConfig::Learner::ctrlsr: nu_spec_ = {{o + 1, h, h, d}, Act::elu, false}; break;
    default: nu_spec_ = {};
  }
  switch (cfg_.critic_kind()) {
    case CriticKind::mlp: critic_spec_ = {{o + a, h, h, 1}, Act::elu, false}; break;
    case CriticKind::latent_variable: critic_spec_ = {{d, h, 1}, Act::elu, false}; break;
    default: critic_spec_ = {};
  }

  std::mt19937_64 net_rng = make_rng(master_seed, "nets");
  mlp_init(actor_, "pi", actor_spec_, net_rng);

  auto init_head = [&](ParamSet& ps, const std::string& prefix, std::mt19937_64& rng) {
    switch (cfg_.critic_kind()) {
      case CriticKind::mlp:
        mlp_init(ps, prefix, critic_spec_, rng);
        break;
      case CriticKind::linear:
        ps.add(prefix + ".xi", Mat::Zero(1, d));
        break;
      case CriticKind::latent_variable:
        mlp_init(ps, prefix, critic_spec_, rng);
        break;
      case CriticKind::ebm: {
        int n = cfg_.rep.rff_count;
        double bound = 1.0 / std::sqrt(2.0 * n);
        ps.add(prefix + ".W2", gaussian_mat(h, 2 * n, rng) * bound);
        ps.add(prefix + ".b2", Mat::Zero(1, h));
        ps.add(prefix + ".eta", Mat::Zero(1, h));
        break;
      }
    }
  };
  init_head(critic1_, "q", net_rng);
  init_head(critic2_, "q", net_rng);
  if (cfg_.critic_kind() == CriticKind::ebm)
    frozen_.add("ebm.W1", gaussian_mat(cfg_.rep.rff_count, d, net_rng));

  if (cfg_.has_representation()) {
    switch (cfg_.learner) {
      case AgentConfig::Learner::scl:
        mlp_init(rep_, "phi", phi_spec_, net_rng);
        mlp_init(rep_, "nu", nu_spec_, net_rng);
        break;
      case AgentConfig::Learner::lvrep:
        mlp_init(rep_, "prior", prior_spec_, net_rng);
        mlp_init(rep_, "enc", enc_spec_, net_rng);
        mlp_init(rep_, "dec", dec_spec_, net_rng);
        break;
      case AgentConfig::Learner::diffsr:
        mlp_init(rep_, "phi", phi_spec_, net_rng);
        mlp_init(rep_, "kappa", kappa_spec_, net_rng);
        break;
      case AgentConfig::Learner::ctrlsr:
        mlp_init(rep_, "phi", phi_spec_, net_rng);
        mlp_init(rep_, "nu", nu_spec_, net_rng);
        break;
      default: break;
    }
    init_head(rep_, "rew", net_rng);
  }

  // Targets start as exact copies.
  auto copy_set = [](const ParamSet& src, ParamSet& dst) {
    for (std::size_t i = 0; i < src.size(); ++i)
      dst.add(src.names()[i], src.value_at(static_cast<int>(i)));
  };
  copy_set(actor_, actor_target_);
  copy_set(critic1_, target1_);
  copy_set(critic2_, target2_);

  opt_actor_ = std::make_unique<Adam>(actor_, cfg_.actor_lr);
  opt_critic1_ = std::make_unique<Adam>(critic1_, cfg_.critic_lr);
  opt_critic2_ = std::make_unique<Adam>(critic2_, cfg_.critic_lr);
  if (cfg_.has_representation()) opt_rep_ = std::make_unique<Adam>(rep_, cfg_.rep_lr);
}

// --- acting -----------------------------------------------------------------

Mat Agent::actor_eval(const ParamSet& actor, const Mat& obs_norm) const {
  return mlp_eval(actor, "pi", actor_spec_, obs_norm).array().tanh().matrix();
}

Vec Agent::act(const Vec& obs, bool explore) {
  Mat a = actor_eval(actor_, normalizer_.normalize(obs).transpose());
  Vec out = a.row(0).transpose();
  if (explore) {
    std::normal_distribution<double> gauss(0.0, cfg_.exploration_noise);
    for (int i = 0; i < out.size(); ++i) out(i) = clampd(out(i) + gauss(noise_rng_), -1.0, 1.0);
  }
  return out;
}

Vec Agent::act_eval(const Vec& obs) const {
  Mat a = actor_eval(actor_, normalizer_.normalize(obs).transpose());
  return a.row(0).transpose();
}

Vec Agent::random_action() {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vec a(act_dim_);
  for (int i = 0; i < act_dim_; ++i) a(i) = unif(noise_rng_);
  return a;
}

void Agent::observe(const Transition& t) {
  normalizer_.update(t.state);
  buffer_.push(t);
}

// --- batches ----------------------------------------------------------------

Batch Agent::sample_batch() {
  auto ids = buffer_.sample_ids(static_cast<std::size_t>(cfg_.batch_size));
  const int b = static_cast<int>(ids.size());
  Batch out;
  out.obs = Mat(b, obs_dim_);
  out.act = Mat(b, act_dim_);
  out.next_obs = Mat(b, obs_dim_);
  out.reward = Vec(b);
  out.not_done = Vec(b);
  out.discount = Vec(b);
  for (int i = 0; i < b; ++i) {
    const Transition& first = buffer_.at(ids[i]);
    out.obs.row(i) = normalizer_.normalize(first.state).transpose();
    out.act.row(i) = first.action.transpose();
    double r = first.reward;
    double g = cfg_.gamma;
    const Transition* last = &first;
    std::uint64_t id = ids[i];
    for (int k = 1; k < cfg_.n_step; ++k) {
      if (last->episode_end || !buffer_.contains(id + 1)) break;
      ++id;
      last = &buffer_.at(id);
      r += g * last->reward;
      g *= cfg_.gamma;
    }
    out.reward(i) = r;
    out.discount(i) = g;  // gamma^k for the bootstrap step
    out.next_obs.row(i) = normalizer_.normalize(last->next_state).transpose();
    out.not_done(i) = last->done ? 0.0 : 1.0;
  }
  return out;
}

std::vector<std::uint64_t> Agent::sample_negative_ids(std::size_t n) {
  if (buffer_.empty()) throw std::runtime_error("replay buffer empty");
  std::uniform_int_distribution<std::uint64_t> dist(buffer_.first_id(), buffer_.next_id() - 1);
  std::vector<std::uint64_t> out(n);
  for (auto& id : out) id = dist(neg_rng_);
  return out;
}

double Agent::pick_beta() {
  std::uniform_int_distribution<std::size_t> dist(0, schedule_.size() - 1);
  return schedule_[dist(neg_rng_)];
}

std::vector<Mat> Agent::draw_lv_eps(int batch_rows) {
  std::vector<Mat> eps;
  for (int l = 0; l < cfg_.rep.mc_samples; ++l)
    eps.push_back(gaussian_mat(batch_rows, cfg_.rep.rep_dim, neg_rng_));
  return eps;
}

// --- Q heads ----------------------------------------------------------------

namespace {

// Shared Q-head body over a leaf-injection strategy so trainable and constant
// variants stay identical.
Tape::Val q_head_body(Tape& t, CriticKind kind, const std::string& prefix, const MlpSpec&,
                      Tape::Val input, Tape::Val logstd, const std::vector<Mat>& eps,
                      const std::function<Tape::Val(const std::string&)>& leaf,
                      const std::function<Tape::Val(Tape::Val)>& mlp_fwd, const Mat& w1) {
  switch (kind) {
    case CriticKind::mlp:
      return mlp_fwd(input);
    case CriticKind::linear:
      return t.matmul_nt(input, leaf(prefix + ".xi"));
    case CriticKind::latent_variable: {
      if (eps.empty()) throw std::invalid_argument("q head: latent-variable head needs eps");
      Tape::Val std = t.exp_(t.clamp(logstd, -20.0, 2.0));
      Tape::Val acc{-1};
      for (const Mat& e : eps) {
        Tape::Val z = t.add(input, t.mul(std, t.constant(e)));
        Tape::Val q = mlp_fwd(z);
        acc = acc.ok() ? t.add(acc, q) : q;
      }
      return t.scale(acc, 1.0 / static_cast<double>(eps.size()));
    }
    case CriticKind::ebm: {
      Tape::Val proj = t.matmul_nt(input, t.constant(w1));
      double scale = 1.0 / std::sqrt(static_cast<double>(w1.rows()));
      Tape::Val feats = t.scale(t.concat_cols(t.cos_(proj), t.sin_(proj)), scale);
      Tape::Val hidden = t.activation(
          t.add_rowvec(t.matmul_nt(feats, leaf(prefix + ".W2")), leaf(prefix + ".b2")), Act::elu);
      return t.matmul_nt(hidden, leaf(prefix + ".eta"));
    }
  }
  throw std::logic_error("unknown critic kind");
}

}  // namespace

Tape::Val q_head_forward(Tape& t, CriticKind kind, ParamSet& params, const std::string& prefix,
                         const MlpSpec& mlp_spec, Tape::Val input, Tape::Val logstd,
                         const std::vector<Mat>& eps, const Mat& frozen_w1) {
  return q_head_body(
      t, kind, prefix, mlp_spec, input, logstd, eps,
      [&](const std::string& name) { return t.param(params, name); },
      [&](Tape::Val in) { return mlp_forward(t, params, prefix, mlp_spec, in); }, frozen_w1);
}

Tape::Val q_head_forward_const(Tape& t, CriticKind kind, const ParamSet& params,
                               const std::string& prefix, const MlpSpec& mlp_spec, Tape::Val input,
                               Tape::Val logstd, const std::vector<Mat>& eps,
                               const Mat& frozen_w1) {
  return q_head_body(
      t, kind, prefix, mlp_spec, input, logstd, eps,
      [&](const std::string& name) { return t.constant(params.value(name)); },
      [&](Tape::Val in) { return mlp_forward_const(t, params, prefix, mlp_spec, in); }, frozen_w1);
}

Tape::Val Agent::q_head_tape(Tape& t, ParamSet& critic, const std::string& prefix, Tape::Val input,
                             Tape::Val logstd, const std::vector<Mat>& eps) {
  const Mat* w1 = frozen_.has("ebm.W1") ? &frozen_.value("ebm.W1") : nullptr;
  return q_head_forward(t, cfg_.critic_kind(), critic, prefix, critic_spec_, input, logstd, eps,
                        w1 ? *w1 : Mat());
}

Tape::Val Agent::q_head_tape_const(Tape& t, const ParamSet& critic, const std::string& prefix,
                                   Tape::Val input, Tape::Val logstd, const std::vector<Mat>& eps) {
  const Mat* w1 = frozen_.has("ebm.W1") ? &frozen_.value("ebm.W1") : nullptr;
  return q_head_forward_const(t, cfg_.critic_kind(), critic, prefix, critic_spec_, input, logstd,
                              eps, w1 ? *w1 : Mat());
}

Mat Agent::rep_features(const Mat& obs_norm, const Mat& act_batch) const {
  return mlp_eval(rep_, "phi", phi_spec_, hcat(obs_norm, act_batch));
}

void Agent::prior_eval(const Mat& obs_norm, const Mat& act_batch, Mat& mean, Mat& logstd) const {
  Mat out = mlp_eval(rep_, "prior", prior_spec_, hcat(obs_norm, act_batch));
  const int d = cfg_.rep.rep_dim;
  mean = out.leftCols(d);
  logstd = out.rightCols(d);
}

Vec Agent::q_eval(const ParamSet& critic, const Mat& obs_norm, const Mat& act_batch,
                  const std::vector<Mat>* eps) const {
  switch (cfg_.critic_kind()) {
    case CriticKind::mlp:
      return mlp_eval(critic, "q", critic_spec_, hcat(obs_norm, act_batch)).col(0);
    case CriticKind::linear: {
      Mat phi = rep_features(obs_norm, act_batch);
      return phi * critic.value("q.xi").row(0).transpose();
    }
    case CriticKind::latent_variable: {
      if (eps == nullptr || eps->empty())
        throw std::invalid_argument("q eval: latent-variable critic needs eps samples");
      Mat mean, logstd;
      prior_eval(obs_norm, act_batch, mean, logstd);
      Mat std = logstd.unaryExpr([](double v) { return std::exp(clampd(v, -20.0, 2.0)); });
      Vec q = Vec::Zero(obs_norm.rows());
      for (const Mat& e : *eps) {
        Mat z = mean + std.cwiseProduct(e);
        q += mlp_eval(critic, "q", critic_spec_, z).col(0);
      }
      return q / static_cast<double>(eps->size());
    }
    case CriticKind::ebm: {
      Mat phi = rep_features(obs_norm, act_batch);
      const Mat& w1 = frozen_.value("ebm.W1");
      Mat proj = phi * w1.transpose();
      double scale = 1.0 / std::sqrt(static_cast<double>(w1.rows()));
      Mat feats(phi.rows(), 2 * w1.rows());
      feats << proj.array().cos().matrix() * scale, proj.array().sin().matrix() * scale;
      Mat hidden = apply_act(
          Act::elu, (feats * critic.value("q.W2").transpose()).rowwise() + critic.value("q.b2").row(0));
      return hidden * critic.value("q.eta").row(0).transpose();
    }
  }
  throw std::logic_error("unknown critic kind");
}

// --- updates ----------------------------------------------------------------

void Agent::check_finite(double loss, const char* name) const {
  if (!std::isfinite(loss))
    throw NumericalError(std::string("agent: non-finite ") + name + " loss at update " +
                         std::to_string(update_count_));
}

Tape::Val Agent::critic_input_tape(Tape& t, const Batch& batch, bool trainable_rep,
                                   Tape::Val* logstd_out) {
  Tape::Val sa = t.constant(hcat(batch.obs, batch.act));
  switch (cfg_.critic_kind()) {
    case CriticKind::mlp:
      return sa;
    case CriticKind::linear:
    case CriticKind::ebm:
      return trainable_rep ? mlp_forward(t, rep_, "phi", phi_spec_, sa)
                           : t.constant(rep_features(batch.obs, batch.act));
    case CriticKind::latent_variable: {
      Tape::Val out = trainable_rep
                          ? mlp_forward(t, rep_, "prior", prior_spec_, sa)
                          : t.constant(mlp_eval(rep_, "prior", prior_spec_,
                                                hcat(batch.obs, batch.act)));
      const int d = cfg_.rep.rep_dim;
      *logstd_out = t.slice_cols(out, d, d);
      return t.slice_cols(out, 0, d);
    }
  }
  throw std::logic_error("unknown critic kind");
}

double Agent::critic_update(const Batch& batch) {
  const int b = batch.size();
  // TD target: r + gamma^k * min over EMA heads at the smoothed target action.
  Mat a2 = actor_eval(actor_target_, batch.next_obs);
  std::normal_distribution<double> gauss(0.0, cfg_.policy_noise);
  for (int i = 0; i < a2.rows(); ++i)
    for (int j = 0; j < a2.cols(); ++j) {
      double n = clampd(gauss(noise_rng_), -cfg_.noise_clip, cfg_.noise_clip);
      a2(i, j) = clampd(a2(i, j) + n, -1.0, 1.0);
    }
  std::vector<Mat> target_eps;
  const std::vector<Mat>* eps_ptr = nullptr;
  if (cfg_.critic_kind() == CriticKind::latent_variable) {
    target_eps = draw_lv_eps(b);
    eps_ptr = &target_eps;
  }
  Vec q1t = q_eval(target1_, batch.next_obs, a2, eps_ptr);
  Vec q2t = q_eval(target2_, batch.next_obs, a2, eps_ptr);
  Vec y = batch.reward.array() +
          batch.discount.array() * batch.not_done.array() * q1t.cwiseMin(q2t).array();

  Tape t;
  Tape::Val logstd{-1};
  Tape::Val input = critic_input_tape(t, batch, cfg_.coupled, &logstd);
  std::vector<Mat> eps;
  if (cfg_.critic_kind() == CriticKind::latent_variable) eps = draw_lv_eps(b);
  Tape::Val q1 = q_head_tape(t, critic1_, "q", input, logstd, eps);
  Tape::Val q2 = q_head_tape(t, critic2_, "q", input, logstd, eps);
  Tape::Val yv = t.constant(y);
  Tape::Val loss = t.mean(t.add(t.square(t.sub(yv, q1)), t.square(t.sub(yv, q2))));
  double value = t.scalar(loss);
  check_finite(value, "critic");
  t.backward(loss);
  opt_critic1_->step(critic1_);
  opt_critic2_->step(critic2_);
  if (cfg_.coupled && opt_rep_) opt_rep_->step(rep_);
  return value;
}

double Agent::actor_update(const Batch& batch) {
  Tape t;
  Tape::Val obs = t.constant(batch.obs);
  Tape::Val a = t.activation(mlp_forward(t, actor_, "pi", actor_spec_, obs), Act::tanh_);
  Tape::Val sa = t.concat_cols(obs, a);

  Tape::Val input{-1}, logstd{-1};
  switch (cfg_.critic_kind()) {
    case CriticKind::mlp: input = sa; break;
    case CriticKind::linear:
    case CriticKind::ebm:
      input = mlp_forward_const(t, rep_, "phi", phi_spec_, sa);
      break;
    case CriticKind::latent_variable: {
      Tape::Val out = mlp_forward_const(t, rep_, "prior", prior_spec_, sa);
      const int d = cfg_.rep.rep_dim;
      logstd = t.slice_cols(out, d, d);
      input = t.slice_cols(out, 0, d);
      break;
    }
  }
  std::vector<Mat> eps;
  if (cfg_.critic_kind() == CriticKind::latent_variable) eps = draw_lv_eps(batch.size());
  Tape::Val q1 = q_head_tape_const(t, critic1_, "q", input, logstd, eps);
  Tape::Val q2 = q_head_tape_const(t, critic2_, "q", input, logstd, eps);
  Tape::Val loss = t.scale(t.mean(t.min_elem(q1, q2)), -1.0);
  double value = t.scalar(loss);
  check_finite(value, "actor");
  t.backward(loss);
  opt_actor_->step(actor_);
  return value;
}

std::pair<double, double> Agent::rep_update(const Batch& batch) {
  if (!cfg_.has_representation()) return {0.0, 0.0};
  const int b = batch.size();
  const int d = cfg_.rep.rep_dim;
  Tape t;
  Tape::Val sa = t.constant(hcat(batch.obs, batch.act));
  Tape::Val rep_loss{-1};
  Tape::Val rew_input{-1}, rew_logstd{-1};

  switch (cfg_.learner) {
    case AgentConfig::Learner::scl: {
      Tape::Val phi = mlp_forward(t, rep_, "phi", phi_spec_, sa);
      Tape::Val nu_pos = mlp_forward(t, rep_, "nu", nu_spec_, t.constant(batch.next_obs));
      auto neg_ids = sample_negative_ids(static_cast<std::size_t>(b));
      Mat negs(b, obs_dim_);
      for (int i = 0; i < b; ++i)
        negs.row(i) = normalizer_.normalize(buffer_.at(neg_ids[i]).next_state).transpose();
      Tape::Val nu_neg = mlp_forward(t, rep_, "nu", nu_spec_, t.constant(negs));
      rep_loss = scl_loss(t, phi, nu_pos, nu_neg, cfg_.rep.scl_lambda);
      rew_input = phi;
      break;
    }
    case AgentConfig::Learner::lvrep: {
      Tape::Val prior = mlp_forward(t, rep_, "prior", prior_spec_, sa);
      Tape::Val enc = mlp_forward(
          t, rep_, "enc", enc_spec_,
          t.constant(hcat(hcat(batch.obs, batch.act), batch.next_obs)));
      Tape::Val p_mean = t.slice_cols(prior, 0, d);
      Tape::Val p_logstd = t.slice_cols(prior, d, d);
      Tape::Val q_mean = t.slice_cols(enc, 0, d);
      Tape::Val q_logstd = t.slice_cols(enc, d, d);
      Mat eps = gaussian_mat(b, d, neg_rng_);
      Tape::Val z = reparam_sample(t, q_mean, q_logstd, eps);
      Tape::Val dec = mlp_forward(t, rep_, "dec", dec_spec_, z);
      rep_loss = elbo_loss(t, q_mean, q_logstd, p_mean, p_logstd, dec, batch.next_obs,
                           cfg_.rep.vae_beta);
      rew_input = p_mean;
      rew_logstd = p_logstd;
      break;
    }
    case AgentConfig::Learner::diffsr: {
      Tape::Val phi = mlp_forward(t, rep_, "phi", phi_spec_, sa);
      Mat betas(b, 1);
      Mat tilde(b, obs_dim_);
      Mat target(b, obs_dim_);
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int i = 0; i < b; ++i) {
        double beta = pick_beta();
        betas(i, 0) = beta;
        for (int c = 0; c < obs_dim_; ++c) {
          tilde(i, c) =
              std::sqrt(1.0 - beta) * batch.next_obs(i, c) + std::sqrt(beta) * gauss(neg_rng_);
          target(i, c) = -(tilde(i, c) - std::sqrt(1.0 - beta) * batch.next_obs(i, c)) / beta;
        }
      }
      Tape::Val packed = mlp_forward(t, rep_, "kappa", kappa_spec_, t.constant(hcat(tilde, betas)));
      rep_loss = csm_loss(t, phi, packed, target, obs_dim_);
      rew_input = phi;
      break;
    }
    case AgentConfig::Learner::ctrlsr: {
      Tape::Val phi = mlp_forward(t, rep_, "phi", phi_spec_, sa);
      const int k = cfg_.rep.n_negatives;
      Mat betas(b, 1);
      Mat pos(b, obs_dim_ + 1);
      Mat neg((std::size_t)b * k, obs_dim_ + 1);
      std::normal_distribution<double> gauss(0.0, 1.0);
      auto neg_ids = sample_negative_ids(static_cast<std::size_t>(b) * k);
      for (int i = 0; i < b; ++i) {
        double beta = pick_beta();
        betas(i, 0) = beta;
        for (int c = 0; c < obs_dim_; ++c)
          pos(i, c) =
              std::sqrt(1.0 - beta) * batch.next_obs(i, c) + std::sqrt(beta) * gauss(neg_rng_);
        pos(i, obs_dim_) = beta;
        for (int j = 0; j < k; ++j) {
          Vec ns = normalizer_.normalize(buffer_.at(neg_ids[(std::size_t)i * k + j]).next_state);
          for (int c = 0; c < obs_dim_; ++c)
            neg(i * k + j, c) = std::sqrt(1.0 - beta) * ns(c) + std::sqrt(beta) * gauss(neg_rng_);
          neg(i * k + j, obs_dim_) = beta;
        }
      }
      Tape::Val nu_pos = mlp_forward(t, rep_, "nu", nu_spec_, t.constant(pos));
      Tape::Val nu_neg = mlp_forward(t, rep_, "nu", nu_spec_, t.constant(neg));
      std::vector<int> repeat((std::size_t)b * k);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < k; ++j) repeat[(std::size_t)i * k + j] = i;
      Tape::Val phi_rep = t.gather_rows(phi, repeat);
      Tape::Val pos_dots = t.row_dot(phi, nu_pos);
      Tape::Val neg_dots = t.reshape(t.row_dot(phi_rep, nu_neg), b, k);
      rep_loss = cfg_.ranking_softplus
                     ? rp_ncel_loss(t, pos_dots, neg_dots, cfg_.rep.denominator_mode,
                                    cfg_.ncel_penalty_weight, cfg_.ncel_margin)
                     : rp_nce_loss(t, pos_dots, neg_dots, cfg_.rep.denominator_mode);
      rew_input = phi;
      break;
    }
    default:
      throw std::logic_error("rep update on a learner without representation");
  }

  std::vector<Mat> eps;
  if (cfg_.critic_kind() == CriticKind::latent_variable) eps = draw_lv_eps(b);
  Tape::Val r_hat = q_head_tape(t, rep_, "rew", rew_input, rew_logstd, eps);
  Tape::Val rew_loss = t.mean(t.square(t.sub(r_hat, t.constant(Mat(batch.reward)))));
  Tape::Val total = t.add(rep_loss, t.scale(rew_loss, cfg_.reward_loss_weight));
  double rep_value = t.scalar(rep_loss);
  double rew_value = t.scalar(rew_loss);
  check_finite(rep_value, "representation");
  check_finite(rew_value, "reward");
  t.backward(total);
  opt_rep_->step(rep_);
  return {rep_value, rew_value};
}

void Agent::soft_update_targets() {
  auto blend = [&](const ParamSet& src, ParamSet& dst) {
    for (std::size_t i = 0; i < src.size(); ++i)
      dst.value_at(static_cast<int>(i)) = (1.0 - cfg_.tau) * dst.value_at(static_cast<int>(i)) +
                                          cfg_.tau * src.value_at(static_cast<int>(i));
  };
  blend(actor_, actor_target_);
  blend(critic1_, target1_);
  blend(critic2_, target2_);
}

StepLosses Agent::update() {
  StepLosses losses;
  if (buffer_.size() < static_cast<std::size_t>(cfg_.batch_size)) return losses;
  ++update_count_;
  Batch batch = sample_batch();
  if (cfg_.has_representation()) {
    auto [rep, rew] = rep_update(batch);
    losses.rep = rep;
    losses.reward = rew;
  }
  losses.critic = critic_update(batch);
  if (update_count_ % static_cast<std::uint64_t>(cfg_.actor_interval) == 0) {
    losses.actor = actor_update(batch);
    losses.actor_updated = true;
    soft_update_targets();
  }
  return losses;
}

// --- checkpoints -------------------------------------------------------------

namespace {
constexpr char kMagic[9] = "SPECRLV1";
}

void Agent::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(kMagic, 8);
  std::string name = learner_name(cfg_.learner);
  std::uint64_t len = name.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(name.data(), static_cast<std::streamsize>(len));
  out.write(reinterpret_cast<const char*>(&update_count_), 8);
  ParamSet header;
  header.add("norm.stats", normalizer_.to_matrix());
  header.save(out);
  for (const ParamSet* ps : {&actor_, &actor_target_, &critic1_, &critic2_, &target1_, &target2_,
                             &rep_, &frozen_})
    ps->save(out);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

void Agent::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string name(len, '\0');
  in.read(name.data(), static_cast<std::streamsize>(len));
  if (learner_from_name(name) != cfg_.learner)
    throw std::runtime_error("checkpoint: learner kind mismatch (" + name + ")");
  in.read(reinterpret_cast<char*>(&update_count_), 8);
  ParamSet header;
  header.load(in);
  normalizer_ = RunningNormalizer::from_matrix(header.value("norm.stats"));
  for (ParamSet* ps : {&actor_, &actor_target_, &critic1_, &critic2_, &target1_, &target2_, &rep_,
                       &frozen_})
    ps->load(in);
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
}

// --- evaluation --------------------------------------------------------------

std::pair<double, double> evaluate(Agent& agent, ContinuousEnv& env, int n_episodes) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  bool was_frozen = agent.normalizer().frozen();
  agent.normalizer().freeze();
  std::vector<double> returns;
  for (int ep = 0; ep < n_episodes; ++ep) {
    Vec obs = env.reset();
    double ret = 0.0;
    while (true) {
      auto step = env.step(agent.act_eval(obs));
      ret += step.reward;
      obs = step.obs;
      if (step.done || step.truncated) break;
    }
    returns.push_back(ret);
  }
  if (!was_frozen) agent.normalizer().unfreeze();
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= returns.size();
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= returns.size();  // population std
  return {mean, std::sqrt(var)};
}

}  // namespace specrl
