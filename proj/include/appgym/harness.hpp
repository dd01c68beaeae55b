#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "appgym/env.hpp"
#include "appgym/nnet.hpp"
#include "appgym/ppo.hpp"

namespace appgym::harness {

// Every default is the vanilla configuration: 35 envs, intermediate rewards,
// horizon 25, 3 x 1024 tanh trunk, 100 evaluation episodes of 25 steps.
struct RunConfig {
  std::string task_id = "settings-easy";
  int num_envs = 35;
  int horizon = 25;
  bool intermediate_rewards = true;
  bool shuffle = false;
  std::map<std::string, std::string> text_augmentation;
  std::vector<std::uint64_t> seeds = {0};
  ppo::PPOConfig ppo;  // num_envs and seed are taken from the fields above
  int updates = 0;     // 0 means the task's policy-update budget
  int eval_every = 1;
  int eval_episodes = 100;
  int eval_horizon = 25;
  bool eval_greedy = false;
  std::vector<int> hidden = {1024, 1024, 1024};
  std::string embedder = "hash-trigram-768";
  int checkpoint_every = 0;
  // Ends a seed early once its evaluated success reaches this value; 0 never.
  double stop_success = 0.0;

  // Throws std::invalid_argument.
  void validate() const;
  int resolved_updates() const;
  bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// YAML with the field names above; `ppo` is a nested mapping. Unknown keys
// are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string emit_run_config(const RunConfig& cfg);

// The task as trained: sparse variant and text augmentation applied.
sim::TaskSpec training_task(const RunConfig& cfg);
env::EnvConfig training_env(const RunConfig& cfg);
env::EnvConfig evaluation_env(const RunConfig& cfg, const sim::TaskSpec& task);
nn::NetSpec net_spec(const RunConfig& cfg, const env::EnvConfig& env_cfg);

struct EvalResult {
  int successes = 0;
  int episodes = 0;
  double success_rate = 0.0;
  double half_width = 0.0;  // 90% normal-approximation interval
};

double confidence_half_width(double p, int episodes);

// Picks flat actions for a batch of observations.
using Chooser =
    std::function<void(const std::vector<const feat::FeatureMatrix*>&, Rng&, std::vector<int>&)>;

// Runs `episodes` independent episodes (all in lock-step) of `env_cfg`,
// whose horizon is used as the evaluation horizon. Success = goal reached.
EvalResult evaluate(const Chooser& chooser, const env::EnvConfig& env_cfg, int episodes,
                    std::uint64_t seed);
EvalResult evaluate_policy(const nn::PolicyParams& params, const env::EnvConfig& env_cfg,
                           int episodes, std::uint64_t seed, bool greedy = false);
EvalResult evaluate_random(const env::EnvConfig& env_cfg, int episodes, std::uint64_t seed);

struct CurvePoint {
  int update = 0;
  double success_rate = 0.0;
  double half_width = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::vector<CurvePoint> curve;
  double final_success = 0.0;

  bool operator==(const RunReport&) const = default;
};

struct ExperimentReport {
  std::string label;
  std::string task_id;
  std::vector<RunReport> runs;
  double random_baseline = 0.0;

  // Mean and median success across seeds at each evaluated update.
  std::vector<CurvePoint> mean_curve() const;
  std::vector<double> median_curve() const;
  double median_final() const;
  bool operator==(const ExperimentReport&) const = default;
};

// First evaluated update whose success rate reaches `threshold`; returns
// `censor` when none does.
int updates_to_reach(const RunReport& run, double threshold, int censor);
double median(std::vector<double> values);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::ostream* log = nullptr;
  std::string label;
};

ExperimentReport run_experiment(const RunConfig& cfg, const RunOptions& options = {});

enum class Knob { kEnvs, kHorizon, kRewards };
Knob knob_from_string(std::string_view name);
std::string_view to_string(Knob knob);

struct AblationArms {
  RunConfig a;
  RunConfig b;
};

// Default arms: envs 3 vs 35, horizon 25 vs 40, rewards on vs off.
AblationArms make_ablation_arms(const RunConfig& base, Knob knob,
                                std::optional<std::pair<int, int>> values = std::nullopt);
// Throws std::logic_error unless the arms differ in the knob field only.
void check_ablation_hygiene(const AblationArms& arms, Knob knob);

struct AblationReport {
  Knob knob = Knob::kEnvs;
  ExperimentReport a;
  ExperimentReport b;
};

AblationReport run_ablation(const AblationArms& arms, Knob knob, const RunOptions& options = {});

struct GeneralizationVariant {
  std::string name;
  ExperimentReport train_app;
  ExperimentReport test_app;
};

struct GeneralizationReport {
  GeneralizationVariant shuffled;
  GeneralizationVariant unshuffled;
};

inline constexpr int kGeneralizationUpdates = 75;

// Default: alarm-easy trained on the alarm app (augmented with
// {"": "add alarm"} for the shuffled arm), evaluated on both the training app
// and the native-clock clone after every evaluation point.
RunConfig default_generalization_config();
GeneralizationReport run_generalization(const RunConfig& cfg, const RunOptions& options = {});

// Stable-order report files. CSV columns: label,task_id,seed,update,
// success_rate,half_width.
void export_report_csv(const std::vector<ExperimentReport>& reports, std::ostream& out);
void export_report_json(const ExperimentReport& report, std::ostream& out);
ExperimentReport report_from_json(const std::string& text);

}  // namespace appgym::harness
