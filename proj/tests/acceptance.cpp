// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
// Usage: appgym_acceptance [--out DIR] [--only 1,4,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "appgym/benchmarks.hpp"
#include "appgym/harness.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace appgym;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_out = "acceptance_runs";

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Desk-scale learning profile: 8 envs, 3 x 256 trunk, horizon 25, 3 seeds.
harness::RunConfig profile(const std::string& task_id) {
  harness::RunConfig cfg;
  cfg.task_id = task_id;
  cfg.num_envs = 8;
  cfg.horizon = 25;
  cfg.hidden = {256, 256, 256};
  cfg.seeds = {0, 1, 2};
  cfg.ppo.bootstrap_on_timeout = false;
  cfg.ppo.normalize_advantages = false;
  return cfg;
}

harness::RunOptions options_for(const std::string& name) {
  return {g_out / name, &std::cerr, ""};
}

// Median over seeds of the first update reaching `bar`, censored at
// budget + 1.
int median_updates_to_reach(const harness::ExperimentReport& report, double bar, int budget) {
  std::vector<double> values;
  for (const auto& run : report.runs) {
    values.push_back(harness::updates_to_reach(run, bar, budget + 1));
  }
  return static_cast<int>(harness::median(values));
}

std::string per_seed(const harness::ExperimentReport& report, double bar, int budget) {
  std::string out = "[";
  for (std::size_t i = 0; i < report.runs.size(); ++i) {
    const int u = harness::updates_to_reach(report.runs[i], bar, budget + 1);
    out += (i ? " " : "") + (u > budget ? std::string("never") : std::to_string(u));
  }
  return out + "]";
}

// --- criterion 1 ------------------------------------------------------------

Outcome oracle_fidelity() {
  const std::map<std::string, int> table = {
      {"settings-easy", 1}, {"settings-medium", 2}, {"settings-hard", 3},
      {"split-easy", 4},    {"split-medium", 8},    {"split-hard", 13},
      {"alarm-easy", 3},    {"alarm-medium", 6},    {"alarm-hard", 9},
      {"shopping-easy", 2}, {"shopping-medium", 4}, {"shopping-hard", 6}};
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> wrong;
  for (const auto& [id, expected] : table) {
    const int got = sim::min_steps_oracle(sim::find_task(id));
    if (got != expected) wrong.push_back(id + "=" + std::to_string(got));
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = wrong.empty() && elapsed < 10.0 && sim::builtin_benchmarks().size() == table.size();
  o.detail = "12 tasks match the minimum-step table in " + fmt(elapsed) + " s";
  for (const auto& w : wrong) o.detail += "; mismatch " + w;
  return o;
}

// --- criterion 2 ------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params =
        nn::init_params(nn::NetSpec{8, {16}, 5}, seed, nn::InitOptions{1.0, 1.0, 1.0});
    const auto check = nn::grad_check(params, testing_oracles::full_loss(seed + 50, params));
    worst = std::max(worst, check.max_relative_error);
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-4 && elapsed < 30.0,
          "max relative error " + fmt(worst) + " over 20 seeds in " + fmt(elapsed) + " s"};
}

// --- criterion 3 ------------------------------------------------------------

Outcome target_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto b = testing_oracles::random_buffer(seed + 7000);
    const auto targets = ppo::compute_targets(b, 0.99);
    for (int e = 0; e < b.num_envs; ++e) {
      for (int t = 0; t < b.n_steps; ++t) {
        const auto i = b.index(t, e);
        const double expected = testing_oracles::brute_force_return(b, t, e, 0.99, true);
        worst = std::max(worst, std::abs(targets.returns[i] - expected));
        worst = std::max(worst, std::abs(targets.advantages[i] - (expected - b.values[i])));
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-9 && elapsed < 5.0,
          "max abs deviation " + fmt(worst) + " on 100 buffers in " + fmt(elapsed) + " s"};
}

// --- criteria 4 and 5 -------------------------------------------------------

Outcome learning_tier(const std::vector<std::string>& tasks, int budget_factor, double bar,
                      const std::string& name,
                      const std::function<const harness::ExperimentReport*(const std::string&)>&
                          reuse = nullptr) {
  Outcome o{true, ""};
  for (const auto& id : tasks) {
    const int budget = sim::find_task(id).policy_update_budget * budget_factor;
    const harness::ExperimentReport* report = reuse ? reuse(id) : nullptr;
    harness::ExperimentReport fresh;
    if (!report) {
      auto cfg = profile(id);
      cfg.updates = budget;
      cfg.stop_success = bar;
      const auto start = std::chrono::steady_clock::now();
      fresh = harness::run_experiment(cfg, options_for(name + "_" + id));
      std::cerr << id << " took " << fmt(seconds_since(start)) << " s\n";
      report = &fresh;
    }
    const int median = median_updates_to_reach(*report, bar, budget);
    const bool ok = median <= budget;
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += id + " " + (ok ? "reached " : "missed ") + fmt(bar) + " (median update " +
                (ok ? std::to_string(median) : "never") + " of " + std::to_string(budget) +
                ", seeds " + per_seed(*report, bar, budget) + ")";
  }
  return o;
}

// Settings-hard at 2 vs 8 envs; the 8-env arm doubles as the hard-tier run.
const harness::AblationReport& envs_ablation() {
  static const harness::AblationReport report = [] {
    auto base = profile("settings-hard");
    base.updates = sim::find_task("settings-hard").policy_update_budget * 3;
    base.stop_success = 0.9;
    const auto arms = harness::make_ablation_arms(base, harness::Knob::kEnvs, std::make_pair(2, 8));
    return harness::run_ablation(arms, harness::Knob::kEnvs, options_for("c7_envs"));
  }();
  return report;
}

// --- criterion 6 ------------------------------------------------------------

Outcome sparse_rewards() {
  Outcome o{true, ""};
  for (const auto* id : {"split-hard", "shopping-hard"}) {
    auto cfg = profile(id);
    cfg.intermediate_rewards = false;
    cfg.eval_every = 5;
    const auto report = harness::run_experiment(cfg, options_for(std::string("c6_sparse_") + id));
    double worst = 0.0;
    for (const auto& run : report.runs) {
      for (const auto& point : run.curve) worst = std::max(worst, point.success_rate);
    }
    o.pass = o.pass && worst <= 0.05;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += std::string(id) + " max success " + fmt(worst) + " over " +
                std::to_string(cfg.resolved_updates()) + " updates x 3 seeds";
  }
  return o;
}

// --- criterion 7 ------------------------------------------------------------

Outcome parallelism() {
  const auto& report = envs_ablation();
  const int budget = sim::find_task("settings-hard").policy_update_budget * 3;
  const int two = median_updates_to_reach(report.a, 0.9, budget);
  const int eight = median_updates_to_reach(report.b, 0.9, budget);
  const auto show = [&](int u) { return u > budget ? "never (" + std::to_string(u) + ")" : std::to_string(u); };
  return {two >= eight, "updates to reach 0.9 on settings-hard: 2 envs " + show(two) +
                            " seeds " + per_seed(report.a, 0.9, budget) + ", 8 envs " +
                            show(eight) + " seeds " + per_seed(report.b, 0.9, budget)};
}

// --- criterion 8 ------------------------------------------------------------

// Keeps the default 35 envs: at 8 envs the shuffled arm collects too few
// successes per update to learn within the budget.
Outcome generalization() {
  auto cfg = harness::default_generalization_config();
  const auto p = profile(cfg.task_id);
  cfg.hidden = p.hidden;
  cfg.seeds = p.seeds;
  cfg.ppo = p.ppo;
  cfg.eval_every = 5;
  const auto report = harness::run_generalization(cfg, options_for("c8_generalization"));
  const double plain = report.unshuffled.test_app.median_final();
  const double shuffled = report.shuffled.test_app.median_final();
  return {plain <= 0.05 && shuffled >= 0.5,
          "clone-app median final success: unshuffled " + fmt(plain) + " (train app " +
              fmt(report.unshuffled.train_app.median_final()) + "), shuffled+augmented " +
              fmt(shuffled) + " (train app " + fmt(report.shuffled.train_app.median_final()) +
              ") after " + std::to_string(cfg.resolved_updates()) + " updates, " +
              std::to_string(cfg.num_envs) + " envs"};
}

// --- criterion 9 ------------------------------------------------------------

int row_of(const feat::FeatureMatrix& obs, const std::string& node_id) {
  for (int i = 0; i < obs.n; ++i) {
    if (obs.action_map[i] && obs.action_map[i]->node_id == node_id) return i;
  }
  return -1;
}

Outcome environment_invariants() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> failures;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  for (const auto& task : sim::builtin_benchmarks()) {
    env::EnvConfig cfg{task};
    check(cfg.num_actions() == 80, task.task_id + " action count");
    check(cfg.featurizer.width() == 871, "feature width");
    // Random walks; at each visited state every one of the 80 actions is
    // applied to a copy of the env.
    Rng rng(derive_seed(11, task.task_id.size()));
    for (int episode = 0; episode < 3; ++episode) {
      env::AppEnv env(cfg);
      const auto first = env.reset();
      check(sim::hard_reset(task) == env.state(), task.task_id + " hard reset determinism");
      double total = 0.0;
      auto obs = first;
      for (int t = 0; t < 25; ++t) {
        for (int a = 0; a < 80; ++a) {
          env::AppEnv probe = env;
          const auto r = probe.step(env::Action::from_flat(a));
          check(r.observation.n == 20 && r.observation.m == 871, task.task_id + " closure");
        }
        // Zero padding beyond the element count.
        for (int row = obs.element_count(); row < obs.n; ++row) {
          check(obs.rows[row].indices.empty() && !obs.action_map[row], "zero padding");
        }
        const auto r = env.step(env::Action::from_flat(static_cast<int>(uniform_index(rng, 80))));
        total += r.reward;
        obs = r.observation;
        if (r.done) break;
      }
      check(total <= task.reward.max_total() + 1e-12, task.task_id + " one-shot reward bound");
    }
    // Following the optimal plan twice collects the reward budget once.
    env::AppEnv env(cfg);
    auto obs = env.reset();
    double total = 0.0;
    for (const auto& event : sim::solve_min_steps(task).plan) {
      int token = 0;
      if (event.token()) {
        token = static_cast<int>(std::find(task.tokens.begin(), task.tokens.end(), *event.token()) -
                                 task.tokens.begin());
      }
      const auto r = env.step(env::Action(row_of(obs, event.node_id()), token));
      total += r.reward;
      obs = r.observation;
    }
    check(std::abs(total - task.reward.max_total()) < 1e-12, task.task_id + " plan reward");
  }

  // Permutation equivariance on every builtin screen reachable at reset.
  const auto fcfg = feat::default_featurizer_config();
  for (const auto& task : sim::builtin_benchmarks()) {
    const auto screen = sim::hard_reset(task).rendered;
    const auto base = feat::featurize(screen, fcfg);
    const int count = base.element_count();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto perm = feat::make_shuffle_perm(seed, count);
      const auto shuffled = feat::featurize(screen, fcfg, &perm);
      for (int i = 0; i < count; ++i) {
        check(shuffled.rows[i] == base.rows[perm[i]] &&
                  shuffled.action_map[i] == base.action_map[perm[i]],
              "permutation equivariance");
      }
    }
  }

  // Vector env equals independent envs.
  {
    auto base = env::EnvConfig{sim::find_task("alarm-medium")};
    base.shuffle = true;
    base.horizon = 8;
    const auto configs = env::replicate(base, 4, 3);
    env::VecEnv venv(configs);
    std::vector<env::AppEnv> singles(configs.begin(), configs.end());
    const auto batch = venv.reset();
    for (std::size_t i = 0; i < singles.size(); ++i) {
      check(batch[i] == singles[i].reset(), "vec reset equivalence");
    }
    Rng rng(1);
    for (int t = 0; t < 40; ++t) {
      std::vector<env::Action> actions;
      for (std::size_t i = 0; i < singles.size(); ++i) {
        actions.push_back(env::Action::from_flat(static_cast<int>(uniform_index(rng, 80))));
      }
      const auto results = venv.step(actions);
      for (std::size_t i = 0; i < singles.size(); ++i) {
        const auto single = singles[i].step(actions[i]);
        check(results[i].reward == single.reward && results[i].done == single.done,
              "vec step equivalence");
        if (single.done) {
          check(*results[i].info.terminal_observation == single.observation, "vec terminal obs");
          check(results[i].observation == singles[i].reset(), "vec auto-reset");
        } else {
          check(results[i].observation == single.observation, "vec observation");
        }
      }
    }
  }

  // Ratio identity before the first optimizer step; uniform-policy entropy.
  {
    env::EnvConfig cfg{sim::find_task("settings-hard")};
    env::VecEnv venv(env::replicate(cfg, 4, 0));
    ppo::PPOConfig pcfg;
    pcfg.num_envs = 4;
    pcfg.n_steps = 32;
    auto policy = ppo::make_policy(nn::NetSpec{20 * 871, {64, 64, 64}, 80}, pcfg);
    ppo::RolloutCollector collector(venv, 5);
    ppo::EpisodeStats stats;
    const auto buffer = collector.collect(policy.params, pcfg.n_steps, stats);
    Rng rng(6);
    const auto update =
        ppo::update(policy, buffer, ppo::compute_targets(buffer, pcfg.gamma), pcfg, rng);
    check(update.first_minibatch_max_ratio_error <= 1e-6, "ratio identity");

    auto zero = nn::init_params(nn::NetSpec{20 * 871, {64}, 80}, 0);
    zero.policy_head.W.setZero();
    const auto cache = nn::forward(zero, ppo::observations_to_batch(venv.reset()));
    const auto terms = ppo::ppo_loss(cache.logits, cache.values, {0, 1, 2, 3}, {0, 0, 0, 0},
                                     {0, 0, 0, 0}, {0, 0, 0, 0}, 0.2, 0.5, 0.01);
    check(std::abs(terms.entropy - std::log(80.0)) <= 1e-6, "uniform entropy");
  }

  const double elapsed = seconds_since(start);
  std::sort(failures.begin(), failures.end());
  failures.erase(std::unique(failures.begin(), failures.end()), failures.end());
  Outcome o{failures.empty() && elapsed < 60.0,
            "closure, one-shot rewards, hard reset, equivariance, padding, width 871, vec/single, "
            "ratio identity, ln(80) entropy in " +
                fmt(elapsed) + " s"};
  for (const auto& f : failures) o.detail += "; failed: " + f;
  return o;
}

// --- criterion 10 -----------------------------------------------------------

Outcome reproducibility() {
  auto cfg = profile("settings-medium");
  cfg.seeds = {4};
  cfg.updates = 3;
  cfg.eval_episodes = 20;
  const auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  fs::remove_all(g_out / "c10_run_a");
  fs::remove_all(g_out / "c10_run_b");
  harness::run_experiment(cfg, {g_out / "c10_run_a", nullptr, ""});
  harness::run_experiment(cfg, {g_out / "c10_run_b", nullptr, ""});
  const auto a = read(g_out / "c10_run_a" / "seed4_metrics.csv");
  const auto b = read(g_out / "c10_run_b" / "seed4_metrics.csv");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {!a.empty() && a == b && lines == 4,
          "metrics CSV " + std::string(a == b ? "byte-identical" : "differs") + " across two runs (" +
              std::to_string(a.size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) {
      g_out = argv[++i];
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: " << argv[0] << " [--out DIR] [--only 1,2,...]\n";
      return 1;
    }
  }
  fs::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle fidelity", oracle_fidelity},
      {"gradient correctness", gradient_correctness},
      {"target oracle equivalence", target_equivalence},
      {"learning, easy tier (>= 0.9 within 2x budget)",
       [] {
         return learning_tier({"settings-easy", "shopping-easy", "alarm-easy"}, 2, 0.9, "c4");
       }},
      {"learning, hard tier (>= 0.7 within 3x budget)",
       [] {
         return learning_tier({"settings-hard", "shopping-hard"}, 3, 0.7, "c5",
                              [](const std::string& id) -> const harness::ExperimentReport* {
                                return id == "settings-hard" ? &envs_ablation().b : nullptr;
                              });
       }},
      {"sparse-reward ablation (<= 0.05)", sparse_rewards},
      {"parallelism ablation (2 envs need >= updates of 8 envs)", parallelism},
      {"generalization to the clone app", generalization},
      {"environment invariants", environment_invariants},
      {"reproducibility", reproducibility},
  };

  std::vector<std::string> lines;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failed;
    const std::string line = std::string(outcome.pass ? "PASS" : "FAIL") + " criterion " +
                             std::to_string(number) + " " + criteria[i].first + ": " +
                             outcome.detail;
    std::cout << line << std::endl;
    lines.push_back(line);
  }
  std::ofstream summary(g_out / "summary.txt");
  for (const auto& line : lines) summary << line << '\n';
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
