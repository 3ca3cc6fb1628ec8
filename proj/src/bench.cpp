#include "specrl/bench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace specrl {

namespace {

std::string fmt_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("config: bad number '" + s + "'");
  return v;
}

long parse_long(const std::string& s) {
  std::size_t pos = 0;
  long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("config: bad integer '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + s + "'");
}

struct FieldDef {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define STR_FIELD(f) \
  {#f, [](const ExperimentConfig& c) { return c.f; }, \
   [](ExperimentConfig& c, const std::string& v) { c.f = v; }}
#define INT_FIELD(f) \
  {#f, [](const ExperimentConfig& c) { return std::to_string(c.f); }, \
   [](ExperimentConfig& c, const std::string& v) { c.f = static_cast<decltype(c.f)>(parse_long(v)); }}
#define DBL_FIELD(f) \
  {#f, [](const ExperimentConfig& c) { return fmt_double(c.f); }, \
   [](ExperimentConfig& c, const std::string& v) { c.f = parse_double(v); }}
#define BOOL_FIELD(f) \
  {#f, [](const ExperimentConfig& c) { return std::string(c.f ? "true" : "false"); }, \
   [](ExperimentConfig& c, const std::string& v) { c.f = parse_bool(v); }}

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      STR_FIELD(env),
      STR_FIELD(learner),
      {"seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
       [](ExperimentConfig& c, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(parse_long(v));
       }},
      INT_FIELD(total_frames),
      INT_FIELD(action_repeat),
      INT_FIELD(eval_interval_frames),
      INT_FIELD(eval_episodes),
      INT_FIELD(warmup_frames),
      INT_FIELD(smoothing_window),
      INT_FIELD(window_l),
      INT_FIELD(horizon),
      BOOL_FIELD(downward_start),
      DBL_FIELD(gamma),
      DBL_FIELD(tau),
      INT_FIELD(hidden),
      INT_FIELD(rep_dim),
      INT_FIELD(batch_size),
      DBL_FIELD(actor_lr),
      DBL_FIELD(critic_lr),
      DBL_FIELD(rep_lr),
      DBL_FIELD(policy_noise),
      DBL_FIELD(noise_clip),
      DBL_FIELD(exploration_noise),
      INT_FIELD(actor_interval),
      INT_FIELD(n_step),
      DBL_FIELD(reward_loss_weight),
      DBL_FIELD(scl_lambda),
      DBL_FIELD(vae_beta),
      INT_FIELD(n_negatives),
      INT_FIELD(mc_samples),
      INT_FIELD(rff_count),
      INT_FIELD(noise_levels),
      DBL_FIELD(noise_lo),
      DBL_FIELD(noise_hi),
      STR_FIELD(denominator_mode),
      BOOL_FIELD(ranking_softplus),
      DBL_FIELD(ncel_penalty_weight),
      DBL_FIELD(ncel_margin),
      BOOL_FIELD(coupled),
      INT_FIELD(buffer_capacity),
      BOOL_FIELD(early_stop),
      DBL_FIELD(early_stop_return),
  };
  return defs;
}

#undef STR_FIELD
#undef INT_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD

}  // namespace

void ExperimentConfig::validate() const {
  if (env != "pendulum" && env != "pendulum_partial")
    throw std::invalid_argument("config: unknown env '" + env + "'");
  learner_from_name(learner);
  if (denominator_mode != "include_positive" && denominator_mode != "negatives_only")
    throw std::invalid_argument("config: unknown denominator_mode '" + denominator_mode + "'");
  if (total_frames < 1 || action_repeat < 1 || eval_interval_frames < 1 || eval_episodes < 1 ||
      warmup_frames < 0 || smoothing_window < 1 || window_l < 1 || horizon < 1)
    throw std::invalid_argument("config: protocol fields must be positive");
  agent_config().validate();
}

AgentConfig ExperimentConfig::agent_config() const {
  AgentConfig ac;
  ac.learner = learner_from_name(learner);
  ac.rep.kind = RepLearnerConfig::Kind::scl;  // informational; learner drives behavior
  ac.rep.rep_dim = rep_dim;
  ac.rep.scl_lambda = scl_lambda;
  ac.rep.vae_beta = vae_beta;
  ac.rep.noise_schedule = geometric_noise_schedule(noise_levels, noise_lo, noise_hi);
  ac.rep.n_negatives = n_negatives;
  ac.rep.mc_samples = mc_samples;
  ac.rep.rff_count = rff_count;
  ac.rep.denominator_mode = denominator_mode == "include_positive"
                                ? RepLearnerConfig::DenominatorMode::include_positive
                                : RepLearnerConfig::DenominatorMode::negatives_only;
  ac.hidden = hidden;
  ac.gamma = std::pow(gamma, window_l);  // L-step TD discount
  ac.tau = tau;
  ac.actor_lr = actor_lr;
  ac.critic_lr = critic_lr;
  ac.rep_lr = rep_lr;
  ac.policy_noise = policy_noise;
  ac.noise_clip = noise_clip;
  ac.exploration_noise = exploration_noise;
  ac.actor_interval = actor_interval;
  ac.batch_size = batch_size;
  ac.n_step = n_step;
  ac.reward_loss_weight = reward_loss_weight;
  ac.ranking_softplus = ranking_softplus;
  ac.ncel_penalty_weight = ncel_penalty_weight;
  ac.ncel_margin = ncel_margin;
  ac.coupled = coupled;
  ac.buffer_capacity = static_cast<std::size_t>(buffer_capacity);
  return ac;
}

ExperimentConfig ExperimentConfig::parse(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : kv) cfg.apply_override(key, value);
  return cfg;
}

void ExperimentConfig::apply_override(const std::string& key, const std::string& value) {
  for (const auto& def : fields()) {
    if (def.name == key) {
      def.set(*this, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: missing '=' on line " + std::to_string(lineno));
    auto strip = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (kv.count(key)) throw std::invalid_argument("config: duplicate key '" + key + "'");
    kv[key] = value;
  }
  return parse(kv);
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  for (const auto& def : fields()) out << def.name << "=" << def.get(*this) << "\n";
  return out.str();
}

// --- metrics -----------------------------------------------------------------

std::vector<double> smooth_trailing(const std::vector<double>& xs, int window) {
  if (window < 1) throw std::invalid_argument("smoothing window must be positive");
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += xs[j];
    out[i] = acc / static_cast<double>(i - lo + 1);
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  out << "frame,return_mean,return_std,loss_rep,loss_reward,loss_critic,loss_actor,seed\n";
  for (const auto& r : rows) {
    out << r.frame << ',' << fmt_double(r.return_mean) << ',' << fmt_double(r.return_std) << ','
        << fmt_double(r.loss_rep) << ',' << fmt_double(r.loss_reward) << ','
        << fmt_double(r.loss_critic) << ',' << fmt_double(r.loss_actor) << ',' << r.seed << "\n";
  }
}

void write_summary_json(const std::vector<MetricsRow>& rows, int smoothing_window,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  if (rows.empty()) {
    out << "null\n";
    return;
  }
  std::vector<double> returns;
  std::vector<long> frames;
  for (const auto& r : rows) {
    returns.push_back(r.return_mean);
    frames.push_back(r.frame);
  }
  std::vector<double> smoothed = smooth_trailing(returns, smoothing_window);
  nlohmann::json j;
  j["frames"] = frames;
  j["return_mean"] = returns;
  j["smoothed_return"] = smoothed;
  j["final_smoothed"] = smoothed.back();
  j["smoothing_window"] = smoothing_window;
  j["seed"] = rows.front().seed;
  out << j.dump(2) << "\n";
}

// --- environment stack -------------------------------------------------------

EnvStack make_env(const ExperimentConfig& cfg, std::uint64_t env_seed) {
  EnvStack stack;
  PendulumEnv::Params params;
  params.horizon = cfg.horizon;
  params.downward_start = cfg.downward_start;
  stack.base = std::make_unique<PendulumContinuous>(params, env_seed);
  ContinuousEnv* top = stack.base.get();
  if (cfg.env == "pendulum_partial") {
    stack.masked = std::make_unique<MaskedEnv>(*top, std::vector<int>{0, 1});
    top = stack.masked.get();
  }
  stack.windowed = std::make_unique<WindowedEnv>(*top, cfg.window_l);
  return stack;
}

// --- run loop ----------------------------------------------------------------

RunResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunResult result;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    result.exit_code = 2;
    result.error = e.what();
    return result;
  }
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream cfg_out(out_dir + "/config.txt");
    cfg_out << cfg.serialize();
  }

  EnvStack env = make_env(cfg, substream_seed(cfg.seed, "env"));
  Agent agent(cfg.agent_config(), env.top().obs_dim(), env.top().action_dim(), cfg.seed);
  TransitionAssembler assembler(cfg.window_l, cfg.gamma);

  auto t0 = std::chrono::steady_clock::now();
  long frame = 0;
  long next_eval = cfg.eval_interval_frames;
  double acc_rep = 0.0, acc_rew = 0.0, acc_critic = 0.0, acc_actor = 0.0;
  long n_updates = 0, n_actor = 0;
  int eval_index = 0;

  Vec obs = env.top().reset();
  assembler.begin_episode();
  try {
    while (frame < cfg.total_frames) {
      bool warm = frame < cfg.warmup_frames;
      Vec a = warm ? agent.random_action() : agent.act(obs, true);
      auto st = env.top().step(a);
      for (auto& tr : assembler.push(obs, a, st.reward, st.obs, st.done, st.truncated))
        agent.observe(tr);
      obs = st.obs;
      frame += cfg.action_repeat;
      if (!warm) {
        StepLosses losses = agent.update();
        acc_rep += losses.rep;
        acc_rew += losses.reward;
        acc_critic += losses.critic;
        ++n_updates;
        if (losses.actor_updated) {
          acc_actor += losses.actor;
          ++n_actor;
        }
      }
      if (st.done || st.truncated) {
        obs = env.top().reset();
        assembler.begin_episode();
      }
      if (frame >= next_eval) {
        EnvStack eval_env =
            make_env(cfg, substream_seed(cfg.seed, "eval") + 1000003ull * ++eval_index);
        auto [mean, std] = evaluate(agent, eval_env.top(), cfg.eval_episodes);
        MetricsRow row;
        row.frame = frame;
        row.return_mean = mean;
        row.return_std = std;
        row.loss_rep = n_updates ? acc_rep / n_updates : 0.0;
        row.loss_reward = n_updates ? acc_rew / n_updates : 0.0;
        row.loss_critic = n_updates ? acc_critic / n_updates : 0.0;
        row.loss_actor = n_actor ? acc_actor / n_actor : 0.0;
        row.wallclock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.seed = cfg.seed;
        result.rows.push_back(row);
        acc_rep = acc_rew = acc_critic = acc_actor = 0.0;
        n_updates = n_actor = 0;
        next_eval += cfg.eval_interval_frames;
        if (cfg.early_stop && mean >= cfg.early_stop_return) break;
      }
    }
  } catch (const NumericalError& e) {
    result.exit_code = 3;
    result.error = e.what();
    result.checkpoint_path = out_dir + "/diag.ckpt";
    agent.save_checkpoint(result.checkpoint_path);
    std::ofstream diag(out_dir + "/diag.txt");
    diag << e.what() << "\nframe=" << frame << "\n";
    write_metrics_csv(result.rows, out_dir + "/metrics.csv");
    write_summary_json(result.rows, cfg.smoothing_window, out_dir + "/summary.json");
    return result;
  }

  result.checkpoint_path = out_dir + "/final.ckpt";
  agent.save_checkpoint(result.checkpoint_path);
  write_metrics_csv(result.rows, out_dir + "/metrics.csv");
  write_summary_json(result.rows, cfg.smoothing_window, out_dir + "/summary.json");
  return result;
}

}  // namespace specrl
