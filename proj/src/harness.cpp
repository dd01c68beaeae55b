#include "appgym/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "appgym/benchmarks.hpp"

namespace appgym::harness {

void RunConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid run config: " + what);
  };
  sim::find_task(task_id);
  require(num_envs >= 1, "num_envs must be at least 1");
  require(horizon >= 1, "horizon must be at least 1");
  require(!seeds.empty(), "seeds must not be empty");
  require(updates >= 0, "updates must be non-negative");
  require(eval_every >= 1, "eval_every must be at least 1");
  require(eval_episodes >= 1, "eval_episodes must be at least 1");
  require(eval_horizon >= 1, "eval_horizon must be at least 1");
  require(!hidden.empty(), "hidden must list at least one layer");
  for (int width : hidden) require(width >= 1, "hidden widths must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be non-negative");
  require(stop_success >= 0.0 && stop_success <= 1.0, "stop_success must be in [0, 1]");
  feat::make_embedder(embedder);
  auto p = ppo;
  p.num_envs = num_envs;
  p.validate();
}

int RunConfig::resolved_updates() const {
  return updates > 0 ? updates : sim::find_task(task_id).policy_update_budget;
}

namespace {

int line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.is_null() ? 0 : mark.line + 1;
}

[[noreturn]] void config_fail(const YAML::Node& node, const std::string& key,
                              const std::string& message) {
  const int line = line_of(node);
  throw ConfigError((line > 0 ? "line " + std::to_string(line) + ": " : std::string{}) + key +
                    ": " + message);
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) config_fail(node, key, "expected a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    config_fail(node, key, "cannot convert '" + node.Scalar() + "'");
  }
}

template <typename T>
std::vector<T> sequence(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence()) config_fail(node, key, "expected a list");
  std::vector<T> out;
  for (const auto& item : node) out.push_back(scalar<T>(item, key));
  return out;
}

void parse_ppo(const YAML::Node& node, ppo::PPOConfig& p) {
  if (!node.IsMap()) config_fail(node, "ppo", "expected a mapping");
  for (const auto& entry : node) {
    const auto key = entry.first.as<std::string>();
    const auto& v = entry.second;
    const std::string path = "ppo." + key;
    if (key == "epochs") p.epochs = scalar<int>(v, path);
    else if (key == "learning_rate") p.learning_rate = scalar<double>(v, path);
    else if (key == "minibatch_size") p.minibatch_size = scalar<int>(v, path);
    else if (key == "gamma") p.gamma = scalar<double>(v, path);
    else if (key == "vf_coef") p.vf_coef = scalar<double>(v, path);
    else if (key == "clip_eps") p.clip_eps = scalar<double>(v, path);
    else if (key == "ent_coef") p.ent_coef = scalar<double>(v, path);
    else if (key == "n_steps") p.n_steps = scalar<int>(v, path);
    else if (key == "use_gae") p.use_gae = scalar<bool>(v, path);
    else if (key == "gae_lambda") p.gae_lambda = scalar<double>(v, path);
    else if (key == "normalize_advantages") p.normalize_advantages = scalar<bool>(v, path);
    else if (key == "bootstrap_on_timeout") p.bootstrap_on_timeout = scalar<bool>(v, path);
    else if (key == "max_grad_norm") p.max_grad_norm = scalar<double>(v, path);
    else config_fail(entry.first, path, "unknown field");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) throw ConfigError("run config must be a mapping");
  for (const auto& entry : root) {
    const auto key = entry.first.as<std::string>();
    const auto& v = entry.second;
    if (key == "task_id") cfg.task_id = scalar<std::string>(v, key);
    else if (key == "num_envs") cfg.num_envs = scalar<int>(v, key);
    else if (key == "horizon") cfg.horizon = scalar<int>(v, key);
    else if (key == "intermediate_rewards") cfg.intermediate_rewards = scalar<bool>(v, key);
    else if (key == "shuffle") cfg.shuffle = scalar<bool>(v, key);
    else if (key == "text_augmentation") {
      if (!v.IsMap()) config_fail(v, key, "expected a mapping");
      cfg.text_augmentation.clear();
      for (const auto& pair : v) {
        cfg.text_augmentation[pair.first.as<std::string>()] = scalar<std::string>(pair.second, key);
      }
    } else if (key == "seeds") cfg.seeds = sequence<std::uint64_t>(v, key);
    else if (key == "ppo") parse_ppo(v, cfg.ppo);
    else if (key == "updates") cfg.updates = scalar<int>(v, key);
    else if (key == "eval_every") cfg.eval_every = scalar<int>(v, key);
    else if (key == "eval_episodes") cfg.eval_episodes = scalar<int>(v, key);
    else if (key == "eval_horizon") cfg.eval_horizon = scalar<int>(v, key);
    else if (key == "eval_greedy") cfg.eval_greedy = scalar<bool>(v, key);
    else if (key == "hidden") cfg.hidden = sequence<int>(v, key);
    else if (key == "embedder") cfg.embedder = scalar<std::string>(v, key);
    else if (key == "checkpoint_every") cfg.checkpoint_every = scalar<int>(v, key);
    else if (key == "stop_success") cfg.stop_success = scalar<double>(v, key);
    else config_fail(entry.first, key, "unknown field");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string emit_run_config(const RunConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "task_id" << YAML::Value << cfg.task_id;
  out << YAML::Key << "num_envs" << YAML::Value << cfg.num_envs;
  out << YAML::Key << "horizon" << YAML::Value << cfg.horizon;
  out << YAML::Key << "intermediate_rewards" << YAML::Value << cfg.intermediate_rewards;
  out << YAML::Key << "shuffle" << YAML::Value << cfg.shuffle;
  out << YAML::Key << "text_augmentation" << YAML::Value << YAML::BeginMap;
  for (const auto& [from, to] : cfg.text_augmentation) {
    out << YAML::Key << YAML::DoubleQuoted << from << YAML::Value << YAML::DoubleQuoted << to;
  }
  out << YAML::EndMap;
  out << YAML::Key << "seeds" << YAML::Value << YAML::Flow << cfg.seeds;
  out << YAML::Key << "updates" << YAML::Value << cfg.updates;
  out << YAML::Key << "eval_every" << YAML::Value << cfg.eval_every;
  out << YAML::Key << "eval_episodes" << YAML::Value << cfg.eval_episodes;
  out << YAML::Key << "eval_horizon" << YAML::Value << cfg.eval_horizon;
  out << YAML::Key << "eval_greedy" << YAML::Value << cfg.eval_greedy;
  out << YAML::Key << "hidden" << YAML::Value << YAML::Flow << cfg.hidden;
  out << YAML::Key << "embedder" << YAML::Value << cfg.embedder;
  out << YAML::Key << "checkpoint_every" << YAML::Value << cfg.checkpoint_every;
  out << YAML::Key << "stop_success" << YAML::Value << cfg.stop_success;
  const auto& p = cfg.ppo;
  out << YAML::Key << "ppo" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << p.epochs;
  out << YAML::Key << "learning_rate" << YAML::Value << p.learning_rate;
  out << YAML::Key << "minibatch_size" << YAML::Value << p.minibatch_size;
  out << YAML::Key << "gamma" << YAML::Value << p.gamma;
  out << YAML::Key << "vf_coef" << YAML::Value << p.vf_coef;
  out << YAML::Key << "clip_eps" << YAML::Value << p.clip_eps;
  out << YAML::Key << "ent_coef" << YAML::Value << p.ent_coef;
  out << YAML::Key << "n_steps" << YAML::Value << p.n_steps;
  out << YAML::Key << "use_gae" << YAML::Value << p.use_gae;
  out << YAML::Key << "gae_lambda" << YAML::Value << p.gae_lambda;
  out << YAML::Key << "normalize_advantages" << YAML::Value << p.normalize_advantages;
  out << YAML::Key << "bootstrap_on_timeout" << YAML::Value << p.bootstrap_on_timeout;
  out << YAML::Key << "max_grad_norm" << YAML::Value << p.max_grad_norm;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

sim::TaskSpec training_task(const RunConfig& cfg) {
  sim::TaskSpec task = sim::find_task(cfg.task_id);
  task.sparse_variant = !cfg.intermediate_rewards;
  if (!cfg.text_augmentation.empty()) {
    task.app = std::make_shared<const sim::AppDefinition>(sim::clone_app_variant(
        *task.app, cfg.text_augmentation, task.app->app_id + "_augmented"));
  }
  return task;
}

env::EnvConfig training_env(const RunConfig& cfg) {
  env::EnvConfig env_cfg{training_task(cfg)};
  env_cfg.horizon = cfg.horizon;
  env_cfg.featurizer.embedder = feat::make_embedder(cfg.embedder);
  env_cfg.shuffle = cfg.shuffle;
  return env_cfg;
}

env::EnvConfig evaluation_env(const RunConfig& cfg, const sim::TaskSpec& task) {
  env::EnvConfig env_cfg{task};
  env_cfg.horizon = cfg.eval_horizon;
  env_cfg.featurizer.embedder = feat::make_embedder(cfg.embedder);
  env_cfg.shuffle = cfg.shuffle;
  return env_cfg;
}

nn::NetSpec net_spec(const RunConfig& cfg, const env::EnvConfig& env_cfg) {
  return nn::NetSpec{env_cfg.n() * env_cfg.featurizer.width(), cfg.hidden,
                     env_cfg.num_actions()};
}

double confidence_half_width(double p, int episodes) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return 1.645 * std::sqrt(p * (1.0 - p) / episodes);
}

EvalResult evaluate(const Chooser& chooser, const env::EnvConfig& env_cfg, int episodes,
                    std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("episodes must be at least 1");
  std::vector<env::AppEnv> envs;
  envs.reserve(episodes);
  for (int i = 0; i < episodes; ++i) {
    env::EnvConfig c = env_cfg;
    c.shuffle_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    envs.emplace_back(std::move(c));
    envs.back().reset();
  }
  Rng rng(derive_seed(~seed, 1));
  EvalResult result;
  result.episodes = episodes;
  std::vector<int> active(episodes);
  std::iota(active.begin(), active.end(), 0);
  std::vector<const feat::FeatureMatrix*> observations;
  std::vector<int> actions;
  const int n = env_cfg.n();
  const int k_tok = env_cfg.k_tok();
  while (!active.empty()) {
    observations.clear();
    for (int i : active) observations.push_back(&envs[i].observation());
    actions.assign(active.size(), 0);
    chooser(observations, rng, actions);
    std::vector<int> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto step = envs[active[k]].step(env::Action::from_flat(actions[k], n, k_tok));
      if (!step.done) {
        still.push_back(active[k]);
      } else if (step.info.goal_reached) {
        ++result.successes;
      }
    }
    active = std::move(still);
  }
  result.success_rate = static_cast<double>(result.successes) / episodes;
  result.half_width = confidence_half_width(result.success_rate, episodes);
  return result;
}

EvalResult evaluate_policy(const nn::PolicyParams& params, const env::EnvConfig& env_cfg,
                           int episodes, std::uint64_t seed, bool greedy) {
  const int num_actions = env_cfg.num_actions();
  const Chooser chooser = [&](const std::vector<const feat::FeatureMatrix*>& obs, Rng& rng,
                              std::vector<int>& actions) {
    nn::SparseBatch batch;
    batch.clear(params.spec.input_dim);
    for (const auto* o : obs) ppo::append_observation(batch, *o);
    const auto out = nn::forward(params, batch);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      actions[k] = ppo::sample_action(out.logits.row(static_cast<Eigen::Index>(k)).data(),
                                      num_actions, rng, greedy);
    }
  };
  return evaluate(chooser, env_cfg, episodes, seed);
}

EvalResult evaluate_random(const env::EnvConfig& env_cfg, int episodes, std::uint64_t seed) {
  const auto num_actions = static_cast<std::uint64_t>(env_cfg.num_actions());
  const Chooser chooser = [&](const std::vector<const feat::FeatureMatrix*>& obs, Rng& rng,
                              std::vector<int>& actions) {
    for (std::size_t k = 0; k < obs.size(); ++k) {
      actions[k] = static_cast<int>(uniform_index(rng, num_actions));
    }
  };
  return evaluate(chooser, env_cfg, episodes, seed);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<CurvePoint> ExperimentReport::mean_curve() const {
  std::vector<CurvePoint> out;
  if (runs.empty()) return out;
  for (std::size_t i = 0; i < runs.front().curve.size(); ++i) {
    CurvePoint point;
    point.update = runs.front().curve[i].update;
    for (const auto& run : runs) point.success_rate += run.curve.at(i).success_rate;
    point.success_rate /= static_cast<double>(runs.size());
    out.push_back(point);
  }
  return out;
}

std::vector<double> ExperimentReport::median_curve() const {
  std::vector<double> out;
  if (runs.empty()) return out;
  for (std::size_t i = 0; i < runs.front().curve.size(); ++i) {
    std::vector<double> values;
    for (const auto& run : runs) values.push_back(run.curve.at(i).success_rate);
    out.push_back(median(values));
  }
  return out;
}

double ExperimentReport::median_final() const {
  std::vector<double> finals;
  for (const auto& run : runs) finals.push_back(run.final_success);
  return median(finals);
}

int updates_to_reach(const RunReport& run, double threshold, int censor) {
  for (const auto& point : run.curve) {
    if (point.success_rate >= threshold) return point.update;
  }
  return censor;
}

namespace {

struct EvalTarget {
  std::string label;
  env::EnvConfig env;
};

std::string file_prefix(const std::string& label, std::uint64_t seed) {
  return (label.empty() ? std::string() : label + "_") + "seed" + std::to_string(seed);
}

// Trains one seed and evaluates on every target at each evaluation point.
std::vector<RunReport> train_seed(const RunConfig& cfg, std::uint64_t seed,
                                  const std::vector<EvalTarget>& targets,
                                  const RunOptions& options) {
  ppo::PPOConfig p = cfg.ppo;
  p.num_envs = cfg.num_envs;
  p.seed = seed;
  const env::EnvConfig env_cfg = training_env(cfg);
  const int updates = cfg.resolved_updates();

  std::vector<RunReport> reports(targets.size());
  for (auto& report : reports) report.seed = seed;

  ppo::TrainOptions train_options;
  train_options.updates = updates;
  train_options.eval_hook = [&](int u, const ppo::Policy& policy)
      -> std::optional<std::pair<double, double>> {
    if (u % cfg.eval_every != 0 && u != updates) return std::nullopt;
    std::optional<std::pair<double, double>> first;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto result = evaluate_policy(policy.params, targets[t].env, cfg.eval_episodes,
                                          derive_seed(seed, 100 + t), cfg.eval_greedy);
      reports[t].curve.push_back({u, result.success_rate, result.half_width});
      if (!first) first = std::make_pair(result.success_rate, result.half_width);
    }
    if (options.log) {
      *options.log << (options.label.empty() ? cfg.task_id : options.label) << " seed " << seed
                   << " update " << u << "/" << updates;
      for (std::size_t t = 0; t < targets.size(); ++t) {
        *options.log << ' ' << targets[t].label << '=' << reports[t].curve.back().success_rate;
      }
      *options.log << '\n';
    }
    return first;
  };

  if (cfg.stop_success > 0.0) {
    train_options.stop_when = [&](const ppo::MetricsRow& row) {
      return row.eval_success && *row.eval_success >= cfg.stop_success;
    };
  }

  std::ofstream metrics;
  std::ofstream timing;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto prefix = file_prefix(options.label, seed);
    metrics.open(*options.out_dir / (prefix + "_metrics.csv"), std::ios::binary);
    timing.open(*options.out_dir / (prefix + "_timing.csv"), std::ios::binary);
    train_options.metrics_out = &metrics;
    train_options.timing_out = &timing;
    if (cfg.checkpoint_every > 0) {
      train_options.checkpoint_dir = *options.out_dir / (prefix + "_checkpoints");
      train_options.checkpoint_every = cfg.checkpoint_every;
    }
  }
  ppo::train(env_cfg, net_spec(cfg, env_cfg), p, train_options);
  for (auto& report : reports) {
    report.final_success = report.curve.empty() ? 0.0 : report.curve.back().success_rate;
  }
  return reports;
}

void write_reports(const std::vector<ExperimentReport>& reports, const RunOptions& options,
                   const std::string& stem) {
  if (!options.out_dir) return;
  std::filesystem::create_directories(*options.out_dir);
  std::ofstream csv(*options.out_dir / (stem + ".csv"), std::ios::binary);
  export_report_csv(reports, csv);
  for (const auto& report : reports) {
    std::ofstream json(*options.out_dir / (stem + "_" + report.label + ".json"), std::ios::binary);
    export_report_json(report, json);
  }
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto task = training_task(cfg);
  const std::vector<EvalTarget> targets = {{"success", evaluation_env(cfg, task)}};
  ExperimentReport report;
  report.label = options.label.empty() ? cfg.task_id : options.label;
  report.task_id = cfg.task_id;
  report.random_baseline =
      evaluate_random(targets.front().env, cfg.eval_episodes, derive_seed(0, 200)).success_rate;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    std::ofstream(*options.out_dir / ((options.label.empty() ? std::string() : options.label + "_") +
                                      "config.yaml"))
        << emit_run_config(cfg);
  }
  for (std::uint64_t seed : cfg.seeds) {
    report.runs.push_back(train_seed(cfg, seed, targets, options).front());
    write_reports({report}, options,
                  options.label.empty() ? std::string("report") : options.label + "_report");
  }
  return report;
}

Knob knob_from_string(std::string_view name) {
  if (name == "envs") return Knob::kEnvs;
  if (name == "horizon") return Knob::kHorizon;
  if (name == "rewards") return Knob::kRewards;
  throw std::invalid_argument("unknown ablation knob: " + std::string(name));
}

std::string_view to_string(Knob knob) {
  switch (knob) {
    case Knob::kEnvs:
      return "envs";
    case Knob::kHorizon:
      return "horizon";
    case Knob::kRewards:
      return "rewards";
  }
  return "?";
}

AblationArms make_ablation_arms(const RunConfig& base, Knob knob,
                                std::optional<std::pair<int, int>> values) {
  AblationArms arms{base, base};
  switch (knob) {
    case Knob::kEnvs: {
      const auto [a, b] = values.value_or(std::make_pair(3, 35));
      arms.a.num_envs = a;
      arms.b.num_envs = b;
      break;
    }
    case Knob::kHorizon: {
      const auto [a, b] = values.value_or(std::make_pair(25, 40));
      arms.a.horizon = a;
      arms.b.horizon = b;
      break;
    }
    case Knob::kRewards: {
      const auto [a, b] = values.value_or(std::make_pair(1, 0));
      arms.a.intermediate_rewards = a != 0;
      arms.b.intermediate_rewards = b != 0;
      break;
    }
  }
  check_ablation_hygiene(arms, knob);
  return arms;
}

void check_ablation_hygiene(const AblationArms& arms, Knob knob) {
  RunConfig b = arms.b;
  switch (knob) {
    case Knob::kEnvs:
      b.num_envs = arms.a.num_envs;
      break;
    case Knob::kHorizon:
      b.horizon = arms.a.horizon;
      break;
    case Knob::kRewards:
      b.intermediate_rewards = arms.a.intermediate_rewards;
      break;
  }
  if (!(b == arms.a)) {
    throw std::logic_error("ablation arms differ outside the '" + std::string(to_string(knob)) +
                           "' knob");
  }
}

AblationReport run_ablation(const AblationArms& arms, Knob knob, const RunOptions& options) {
  check_ablation_hygiene(arms, knob);
  const auto arm_label = [&](const RunConfig& cfg) {
    switch (knob) {
      case Knob::kEnvs:
        return "envs" + std::to_string(cfg.num_envs);
      case Knob::kHorizon:
        return "horizon" + std::to_string(cfg.horizon);
      case Knob::kRewards:
        return std::string(cfg.intermediate_rewards ? "intermediate" : "sparse");
    }
    return std::string();
  };
  AblationReport report;
  report.knob = knob;
  RunOptions a_options = options;
  a_options.label = arm_label(arms.a);
  RunOptions b_options = options;
  b_options.label = arm_label(arms.b);
  if (a_options.label == b_options.label) {
    a_options.label += "_a";
    b_options.label += "_b";
  }
  report.a = run_experiment(arms.a, a_options);
  report.b = run_experiment(arms.b, b_options);
  write_reports({report.a, report.b}, options, "ablation_" + std::string(to_string(knob)));
  return report;
}

RunConfig default_generalization_config() {
  RunConfig cfg;
  cfg.task_id = "alarm-easy";
  cfg.updates = kGeneralizationUpdates;
  cfg.text_augmentation = {{"", "add alarm"}};
  return cfg;
}

GeneralizationReport run_generalization(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto clone = sim::builtin_app("alarm_native_clone");
  GeneralizationReport report;
  const auto run_variant = [&](bool shuffled) {
    RunConfig variant = cfg;
    variant.shuffle = shuffled;
    if (!shuffled) variant.text_augmentation.clear();
    const std::string name = shuffled ? "shuffled_augmented" : "unshuffled";
    auto test_task = sim::retarget_task(training_task(variant), clone,
                                        cfg.task_id + "-" + clone->app_id);
    const std::vector<EvalTarget> targets = {
        {"train_app", evaluation_env(variant, training_task(variant))},
        {"test_app", evaluation_env(variant, test_task)}};
    GeneralizationVariant out;
    out.name = name;
    out.train_app.label = name + "_train_app";
    out.train_app.task_id = variant.task_id;
    out.test_app.label = name + "_test_app";
    out.test_app.task_id = test_task.task_id;
    out.train_app.random_baseline =
        evaluate_random(targets[0].env, cfg.eval_episodes, derive_seed(0, 200)).success_rate;
    out.test_app.random_baseline =
        evaluate_random(targets[1].env, cfg.eval_episodes, derive_seed(0, 200)).success_rate;
    RunOptions variant_options = options;
    variant_options.label = name;
    for (std::uint64_t seed : variant.seeds) {
      auto runs = train_seed(variant, seed, targets, variant_options);
      out.train_app.runs.push_back(std::move(runs[0]));
      out.test_app.runs.push_back(std::move(runs[1]));
    }
    return out;
  };
  report.unshuffled = run_variant(false);
  report.shuffled = run_variant(true);
  write_reports({report.unshuffled.train_app, report.unshuffled.test_app,
                 report.shuffled.train_app, report.shuffled.test_app},
                options, "generalization");
  return report;
}

namespace {

void put_number(std::ostream& out, double value) {
  char buffer[32];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  out.write(buffer, end - buffer);
}

}  // namespace

void export_report_csv(const std::vector<ExperimentReport>& reports, std::ostream& out) {
  out << "label,task_id,seed,update,success_rate,half_width\n";
  for (const auto& report : reports) {
    for (const auto& run : report.runs) {
      for (const auto& point : run.curve) {
        out << report.label << ',' << report.task_id << ',' << run.seed << ',' << point.update
            << ',';
        put_number(out, point.success_rate);
        out << ',';
        put_number(out, point.half_width);
        out << '\n';
      }
    }
  }
}

void export_report_json(const ExperimentReport& report, std::ostream& out) {
  nlohmann::ordered_json j;
  j["label"] = report.label;
  j["task_id"] = report.task_id;
  j["random_baseline"] = report.random_baseline;
  j["median_final_success"] = report.median_final();
  auto runs = nlohmann::ordered_json::array();
  for (const auto& run : report.runs) {
    nlohmann::ordered_json r;
    r["seed"] = run.seed;
    r["final_success"] = run.final_success;
    auto curve = nlohmann::ordered_json::array();
    for (const auto& point : run.curve) {
      curve.push_back({{"update", point.update},
                       {"success_rate", point.success_rate},
                       {"half_width", point.half_width}});
    }
    r["curve"] = std::move(curve);
    runs.push_back(std::move(r));
  }
  j["runs"] = std::move(runs);
  out << j.dump(2) << '\n';
}

ExperimentReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ExperimentReport report;
  report.label = j.at("label").get<std::string>();
  report.task_id = j.at("task_id").get<std::string>();
  report.random_baseline = j.at("random_baseline").get<double>();
  for (const auto& r : j.at("runs")) {
    RunReport run;
    run.seed = r.at("seed").get<std::uint64_t>();
    run.final_success = r.at("final_success").get<double>();
    for (const auto& p : r.at("curve")) {
      run.curve.push_back({p.at("update").get<int>(), p.at("success_rate").get<double>(),
                           p.at("half_width").get<double>()});
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

}  // namespace appgym::harness
