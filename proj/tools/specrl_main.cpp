// Command-line entry point: run / sweep / oracle / eval.
#include <sys/wait.h>
#include <unistd.h>

#include <iostream>

#include <CLI11.hpp>

#include "specrl/bench.hpp"
#include "specrl/bonus.hpp"
#include "specrl/spectral_oracle.hpp"

namespace {

using namespace specrl;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::vector<std::string>& overrides, const std::string& out_dir) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::load_file(config_path);
    for (const auto& ov : overrides) {
      auto eq = ov.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("override must be key=value: " + ov);
      cfg.apply_override(ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  RunResult res = run_experiment(cfg, out_dir);
  if (res.exit_code != 0) {
    std::cerr << "run failed: " << res.error << "\n";
    return res.exit_code;
  }
  if (!res.rows.empty())
    std::cout << "final return_mean " << res.rows.back().return_mean << " over "
              << res.rows.size() << " evaluations\n";
  std::cout << "wrote " << out_dir << "/metrics.csv\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& seeds_spec, int jobs,
              const std::string& out_dir) {
  std::uint64_t lo = 0, hi = 0;
  auto dots = seeds_spec.find("..");
  try {
    if (dots == std::string::npos) throw std::invalid_argument("expected a..b");
    lo = std::stoull(seeds_spec.substr(0, dots));
    hi = std::stoull(seeds_spec.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("empty seed range");
  } catch (const std::exception& e) {
    std::cerr << "bad --seeds '" << seeds_spec << "': " << e.what() << "\n";
    return 2;
  }
  ExperimentConfig base;
  try {
    base = ExperimentConfig::load_file(config_path);
    base.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::vector<pid_t> running;
  int worst = 0;
  auto reap_one = [&]() {
    int status = 0;
    pid_t pid = waitpid(-1, &status, 0);
    running.erase(std::remove(running.begin(), running.end(), pid), running.end());
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : 3;
    worst = std::max(worst, code);
  };
  for (std::uint64_t s = lo; s <= hi; ++s) {
    while (static_cast<int>(running.size()) >= std::max(jobs, 1)) reap_one();
    pid_t pid = fork();
    if (pid < 0) {
      std::cerr << "fork failed\n";
      return 3;
    }
    if (pid == 0) {
      ExperimentConfig cfg = base;
      cfg.seed = s;
      RunResult res = run_experiment(cfg, out_dir + "/seed_" + std::to_string(s));
      if (res.exit_code != 0) std::cerr << "seed " << s << ": " << res.error << "\n";
      _exit(res.exit_code);
    }
    running.push_back(pid);
  }
  while (!running.empty()) reap_one();
  return worst;
}

bool oracle_qlinear() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    std::uniform_int_distribution<int> dim(2, 5);
    int ns = dim(rng), na = dim(rng);
    TabularMDP mdp = random_linear_reward_mdp(ns, na, 0.9, rng);
    TabularPolicy pol = random_policy(ns, na, rng);
    Mat q = policy_evaluation_q(mdp, pol);
    auto fac = exact_factorization(mdp, transition_rank(mdp));
    worst = std::max(worst, fit_q_weights(fac, q).residual);
  }
  std::cout << "qlinear: worst residual " << worst << "\n";
  return worst < 1e-8;
}

bool oracle_rff() {
  std::mt19937_64 rng(11);
  RffBank bank = RffBank::init(1024, 8, rng);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double err = 0.0;
  const int pairs = 1000;
  for (int i = 0; i < pairs; ++i) {
    Vec x(8), y(8);
    for (int c = 0; c < 8; ++c) {
      x(c) = unif(rng);
      y(c) = unif(rng);
    }
    double approx = rff_features(bank, x).dot(rff_features(bank, y));
    double exact = std::exp(-0.5 * (x - y).squaredNorm());
    err += std::abs(approx - exact);
  }
  err /= pairs;
  std::cout << "rff: mean kernel error " << err << "\n";
  return err < 0.05;
}

bool oracle_bonus() {
  BonusState bonus(BonusState::Kernel::linear, 4, 1.0, 1.0);
  Vec x = Vec::Zero(4);
  x(0) = 1.0;
  double prev = bonus.bonus(x);
  bool ok = std::abs(prev - 1.0) < 1e-12;
  for (int i = 0; i < 20; ++i) {
    bonus.insert(x);
    double b = bonus.bonus(x);
    ok = ok && b < prev && std::abs(b - bonus.bonus_gram(x)) < 1e-8;
    prev = b;
  }
  std::cout << "bonus: final after 20 insertions " << prev << "\n";
  return ok;
}

bool oracle_lock() {
  TabularMDP lock = combination_lock(10, 0.99);
  std::vector<int> opt, rnd;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r1(1000 + seed), r2(2000 + seed);
    opt.push_back(lock_episodes_optimistic(lock, 20, 2000, 1.0, 1.0, r1).episodes);
    rnd.push_back(lock_episodes_random(lock, 20, 2000, r2).episodes);
  }
  auto median = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  int mo = median(opt), mr = median(rnd);
  std::cout << "lock: optimistic median " << mo << ", random median " << mr << "\n";
  return 2 * mo <= mr;
}

int cmd_oracle(const std::string& name) {
  bool ok = false;
  if (name == "qlinear") ok = oracle_qlinear();
  else if (name == "rff") ok = oracle_rff();
  else if (name == "bonus") ok = oracle_bonus();
  else if (name == "lock") ok = oracle_lock();
  else {
    std::cerr << "unknown oracle '" << name << "' (known: qlinear, rff, bonus, lock)\n";
    return 2;
  }
  std::cout << name << ": " << (ok ? "pass" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, int episodes) {
  try {
    ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
    cfg.validate();
    EnvStack env = make_env(cfg, substream_seed(cfg.seed, "eval"));
    Agent agent(cfg.agent_config(), env.top().obs_dim(), env.top().action_dim(), cfg.seed);
    agent.load_checkpoint(checkpoint);
    agent.normalizer().freeze();
    auto [mean, std] = evaluate(agent, env.top(), episodes);
    std::cout << "return_mean " << mean << " return_std " << std << " over " << episodes
              << " episodes\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "eval error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  specrl::enable_flush_to_zero();
  CLI::App app{"spectral-representation RL benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "runs/out", seeds_spec, oracle_name, checkpoint;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int jobs = 1, episodes = 10;

  auto* run = app.add_subcommand("run", "train one agent");
  run->add_option("--config", config_path)->required();
  std::uint64_t seed_value = 0;
  auto* seed_opt = run->add_option("--seed", seed_value);
  run->add_option("--override", overrides, "key=value config overrides");
  run->add_option("--out", out_dir);

  auto* sweep = app.add_subcommand("sweep", "run a seed sweep in worker processes");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--seeds", seeds_spec, "inclusive range a..b")->required();
  sweep->add_option("--jobs", jobs);
  sweep->add_option("--out", out_dir);

  auto* oracle = app.add_subcommand("oracle", "run a named oracle suite");
  oracle->add_option("name", oracle_name)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--config", config_path)->required();
  eval->add_option("--episodes", episodes);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (seed_opt->count() > 0) seed = seed_value;
  if (run->parsed()) return cmd_run(config_path, seed, overrides, out_dir);
  if (sweep->parsed()) return cmd_sweep(config_path, seeds_spec, jobs, out_dir);
  if (oracle->parsed()) return cmd_oracle(oracle_name);
  if (eval->parsed()) return cmd_eval(checkpoint, config_path, episodes);
  return 2;
}
