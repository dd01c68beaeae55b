#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "appgym/benchmarks.hpp"
#include "appgym/harness.hpp"

namespace fs = std::filesystem;
using namespace appgym;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::vector<std::string> task_ids() {
  std::vector<std::string> ids;
  for (const auto& task : sim::builtin_benchmarks()) ids.push_back(task.task_id);
  return ids;
}

struct ConfigArgs {
  std::string config_path;
  std::optional<int> updates;
  std::optional<int> envs;
  std::vector<std::uint64_t> seeds;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "Run config (YAML)")->check(CLI::ExistingFile);
  cmd->add_option("--updates", args.updates, "Policy updates per seed (0 = task budget)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--envs", args.envs, "Parallel environments")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", args.seeds, "Seeds (repeatable)");
}

harness::RunConfig resolve_config(const ConfigArgs& args, harness::RunConfig cfg) {
  if (!args.config_path.empty()) cfg = harness::load_run_config(args.config_path);
  if (args.updates) cfg.updates = *args.updates;
  if (args.envs) cfg.num_envs = *args.envs;
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  return cfg;
}

void print_report(const harness::ExperimentReport& report) {
  std::cout << report.label << " (" << report.task_id << "): median final success "
            << report.median_final() << ", random baseline " << report.random_baseline << '\n';
  for (const auto& run : report.runs) {
    std::cout << "  seed " << run.seed << ": final " << run.final_success << " after "
              << (run.curve.empty() ? 0 : run.curve.back().update) << " updates\n";
  }
}

void print_tree(const vh::ViewNode& node, int depth) {
  std::cout << std::string(2 * depth, ' ') << node.node_id;
  if (!node.text.empty()) std::cout << " \"" << node.text << '"';
  if (node.clickable) std::cout << " [clickable]";
  if (node.editable) std::cout << " [editable buffer=\"" << node.edit_buffer << "\"]";
  std::cout << '\n';
  for (const auto& child : node.children) print_tree(child, depth + 1);
}

int cmd_oracle(const std::string& task_id, bool show_plan) {
  const auto& tasks = sim::builtin_benchmarks();
  for (const auto& task : tasks) {
    if (task_id != "all" && task.task_id != task_id) continue;
    const auto result = sim::solve_min_steps(task);
    std::cout << task.task_id << ' ' << result.min_steps << " (table " << task.min_steps << ", "
              << result.states_explored << " states)\n";
    if (show_plan) {
      for (const auto& event : result.plan) {
        std::cout << "  " << sim::to_string(event.kind()) << ' ' << event.node_id();
        if (event.token()) std::cout << " \"" << *event.token() << '"';
        std::cout << '\n';
      }
    }
  }
  return kExitOk;
}

int cmd_inspect(const std::string& task_id, const std::string& csv_out, const std::string& bin_out) {
  const auto& task = sim::find_task(task_id);
  const auto state = sim::hard_reset(task);
  std::cout << "task " << task.task_id << ": " << task.description << '\n'
            << "app " << task.app->app_id << ", screen " << state.screen_id << '\n';
  print_tree(state.rendered.root, 1);
  std::cout << "actionable elements:\n";
  for (const auto& e : vh::actionable_elements(state.rendered)) {
    std::cout << "  [" << e.element_index << "] " << e.node_id << " pre-order " << e.preorder_index
              << (e.editable ? " editable" : " clickable") << " \"" << e.text << "\"\n";
  }
  std::cout << "tokens:";
  for (const auto& t : task.tokens) std::cout << " \"" << t << '"';
  std::cout << '\n';
  const auto cfg = feat::default_featurizer_config();
  const auto fm = feat::featurize(state.rendered, cfg);
  std::size_t nonzeros = 0;
  for (const auto& row : fm.rows) nonzeros += row.indices.size();
  std::cout << "features: " << fm.n << " x " << fm.m << " (" << cfg.embedder->name() << "), "
            << fm.element_count() << " element rows, " << nonzeros << " nonzeros\n";
  if (!csv_out.empty()) {
    std::ofstream out(csv_out, std::ios::binary);
    feat::write_csv(fm, out);
    if (!out) throw std::runtime_error("cannot write " + csv_out);
  }
  if (!bin_out.empty()) {
    std::ofstream out(bin_out, std::ios::binary);
    feat::write_binary(fm, out);
    if (!out) throw std::runtime_error("cannot write " + bin_out);
  }
  return kExitOk;
}

int cmd_bench_list() {
  std::cout << std::left << std::setw(18) << "task" << std::setw(11) << "min_steps"
            << std::setw(8) << "budget" << std::setw(10) << "subgoals" << "description\n";
  for (const auto& task : sim::builtin_benchmarks()) {
    std::cout << std::setw(18) << task.task_id << std::setw(11) << task.min_steps << std::setw(8)
              << task.policy_update_budget << std::setw(10) << task.reward.num_subgoals()
              << task.description << '\n';
  }
  return kExitOk;
}

int cmd_bench_baseline(int episodes, const std::string& out_path) {
  nlohmann::ordered_json j;
  j["episodes"] = episodes;
  j["horizon"] = 25;
  j["seed"] = "derive_seed(0, 200)";
  nlohmann::ordered_json rates;
  for (const auto& task : sim::builtin_benchmarks()) {
    const auto result =
        harness::evaluate_random(env::EnvConfig{task}, episodes, derive_seed(0, 200));
    rates[task.task_id] = result.success_rate;
    std::cerr << task.task_id << ' ' << result.success_rate << '\n';
  }
  j["success_rate"] = std::move(rates);
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(out_path, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + out_path);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated mobile-app RL benchmarks trained with PPO"};
  app.require_subcommand(1);
  const auto ids = task_ids();
  auto with_all = ids;
  with_all.push_back("all");

  ConfigArgs train_args;
  std::string train_task;
  std::string train_out;
  auto* train = app.add_subcommand("train", "Train PPO on a task and evaluate after updates");
  train->add_option("--task", train_task, "Task id (overrides the config)")
      ->check(CLI::IsMember(ids));
  train->add_option("--out", train_out, "Output directory (default runs/<task>)");
  add_config_options(train, train_args);

  std::string eval_checkpoint;
  std::string eval_task;
  int eval_episodes = 100;
  int eval_horizon = 25;
  std::uint64_t eval_seed = 0;
  bool eval_greedy = false;
  bool eval_shuffle = false;
  bool eval_clone = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--task", eval_task, "Task id")->required()->check(CLI::IsMember(ids));
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes")
      ->check(CLI::PositiveNumber);
  eval->add_option("--horizon", eval_horizon, "Evaluation horizon")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_flag("--greedy", eval_greedy, "Arg-max actions instead of sampling");
  eval->add_flag("--shuffle", eval_shuffle, "Shuffle observation rows");
  eval->add_flag("--clone", eval_clone, "Run the task on the native-clock clone app");

  ConfigArgs ablate_args;
  std::string ablate_knob;
  std::string ablate_task;
  std::vector<int> ablate_values;
  std::string ablate_out = "runs/ablation";
  auto* ablate = app.add_subcommand("ablate", "Run a two-arm ablation");
  ablate->add_option("--knob", ablate_knob, "Knob to vary")
      ->required()
      ->check(CLI::IsMember({"envs", "horizon", "rewards"}));
  ablate->add_option("--task", ablate_task, "Task id")->check(CLI::IsMember(ids));
  ablate->add_option("--values", ablate_values, "Arm values a b (rewards: 1 or 0)")
      ->expected(2);
  ablate->add_option("--out", ablate_out, "Output directory");
  add_config_options(ablate, ablate_args);

  ConfigArgs gen_args;
  std::string gen_out = "runs/generalization";
  auto* generalize =
      app.add_subcommand("generalize", "Shuffled+augmented vs unshuffled on the clone app");
  generalize->add_option("--out", gen_out, "Output directory");
  add_config_options(generalize, gen_args);

  std::string oracle_task;
  bool oracle_plan = false;
  auto* oracle = app.add_subcommand("oracle", "Print BFS minimum steps");
  oracle->add_option("--task", oracle_task, "Task id or 'all'")
      ->required()
      ->check(CLI::IsMember(with_all));
  oracle->add_flag("--plan", oracle_plan, "Print an optimal event sequence");

  std::string inspect_task;
  std::string inspect_csv;
  std::string inspect_bin;
  auto* inspect = app.add_subcommand("inspect", "Dump the initial screen and its features");
  inspect->add_option("--task", inspect_task, "Task id")->required()->check(CLI::IsMember(ids));
  inspect->add_option("--features-csv", inspect_csv, "Write the feature matrix as CSV");
  inspect->add_option("--features-bin", inspect_bin, "Write the feature matrix as binary");

  auto* bench = app.add_subcommand("bench", "Benchmark catalogue");
  bench->require_subcommand(1);
  bench->add_subcommand("list", "List tasks");
  int baseline_episodes = 10000;
  std::string baseline_out;
  auto* baseline = bench->add_subcommand("baseline", "Monte Carlo random-policy success rates");
  baseline->add_option("--episodes", baseline_episodes, "Episodes per task")
      ->check(CLI::PositiveNumber);
  baseline->add_option("--out", baseline_out, "JSON output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) {
      auto cfg = resolve_config(train_args, {});
      if (!train_task.empty()) cfg.task_id = train_task;
      cfg.validate();
      const fs::path out = train_out.empty() ? fs::path("runs") / cfg.task_id : fs::path(train_out);
      print_report(harness::run_experiment(cfg, {out, &std::cerr, ""}));
      std::cout << "wrote " << out.string() << '\n';
    } else if (*eval) {
      nn::PolicyParams params;
      nn::OptState state;
      nn::load_checkpoint(eval_checkpoint, params, state);
      auto task = sim::find_task(eval_task);
      if (eval_clone) {
        task = sim::retarget_task(task, sim::builtin_app("alarm_native_clone"),
                                  task.task_id + "-alarm_native_clone");
      }
      env::EnvConfig env_cfg{task};
      env_cfg.horizon = eval_horizon;
      env_cfg.shuffle = eval_shuffle;
      if (params.spec.input_dim != env_cfg.n() * env_cfg.featurizer.width() ||
          params.spec.num_actions != env_cfg.num_actions()) {
        throw std::runtime_error("checkpoint network does not match the task's spaces");
      }
      const auto result =
          harness::evaluate_policy(params, env_cfg, eval_episodes, eval_seed, eval_greedy);
      std::cout << task.task_id << " success " << result.success_rate << " +/- "
                << result.half_width << " (" << result.successes << "/" << result.episodes
                << ")\n";
    } else if (*ablate) {
      harness::RunConfig base = resolve_config(ablate_args, {});
      if (!ablate_task.empty()) base.task_id = ablate_task;
      const auto knob = harness::knob_from_string(ablate_knob);
      std::optional<std::pair<int, int>> values;
      if (ablate_values.size() == 2) values = std::make_pair(ablate_values[0], ablate_values[1]);
      const auto arms = harness::make_ablation_arms(base, knob, values);
      arms.a.validate();
      arms.b.validate();
      const auto report = harness::run_ablation(arms, knob, {fs::path(ablate_out), &std::cerr, ""});
      print_report(report.a);
      print_report(report.b);
    } else if (*generalize) {
      const auto cfg = resolve_config(gen_args, harness::default_generalization_config());
      const auto report = harness::run_generalization(cfg, {fs::path(gen_out), &std::cerr, ""});
      for (const auto* variant : {&report.unshuffled, &report.shuffled}) {
        print_report(variant->train_app);
        print_report(variant->test_app);
      }
    } else if (*oracle) {
      return cmd_oracle(oracle_task, oracle_plan);
    } else if (*inspect) {
      return cmd_inspect(inspect_task, inspect_csv, inspect_bin);
    } else if (*baseline) {
      return cmd_bench_baseline(baseline_episodes, baseline_out);
    } else if (*bench) {
      return cmd_bench_list();
    }
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
