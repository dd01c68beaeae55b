#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "appgym/app_sim.hpp"
#include "appgym/featurizer.hpp"
#include "appgym/rng.hpp"

namespace appgym::env {

inline constexpr int kDefaultTokens = 4;

// (element row, token) pair. Flat index = element_index * k_tok + token_index.
class Action {
 public:
  // Throws std::out_of_range unless 0 <= element < n and 0 <= token < k_tok.
  Action(int element_index, int token_index, int n = 20, int k_tok = kDefaultTokens);
  static Action from_flat(int flat, int n = 20, int k_tok = kDefaultTokens);

  int element_index() const { return element_index_; }
  int token_index() const { return token_index_; }
  int flat(int k_tok = kDefaultTokens) const { return element_index_ * k_tok + token_index_; }

 private:
  int element_index_;
  int token_index_;
};

struct EnvConfig {
  sim::TaskSpec task;
  int horizon = 25;
  feat::FeaturizerConfig featurizer = feat::default_featurizer_config();
  bool shuffle = false;
  std::uint64_t shuffle_seed = 0;

  int n() const { return featurizer.n; }
  int k_tok() const { return static_cast<int>(task.tokens.size()); }
  int num_actions() const { return n() * k_tok(); }
};

struct StepInfo {
  int steps_taken = 0;
  std::vector<bool> sub_goals_hit;  // predicates fired so far this episode
  bool was_noop = false;
  bool goal_reached = false;
  bool timed_out = false;
  std::string screen_id;
  // Set by the vector env when it auto-resets after `done`.
  std::optional<feat::FeatureMatrix> terminal_observation;
};

struct StepResult {
  feat::FeatureMatrix observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class SteppedAfterDone : public std::logic_error {
 public:
  SteppedAfterDone() : std::logic_error("step called on a finished episode; reset first") {}
};

class AppEnv {
 public:
  explicit AppEnv(EnvConfig cfg);

  const feat::FeatureMatrix& reset();
  StepResult step(const Action& action);

  const EnvConfig& config() const { return cfg_; }
  const sim::AppState& state() const { return state_; }
  const feat::FeatureMatrix& observation() const { return observation_; }
  const sim::RewardSpec& reward_spec() const { return reward_; }
  bool done() const { return done_; }
  int steps_taken() const { return steps_; }

  // JSON-lines trace, one object per step; pass nullptr to disable.
  void set_trace(std::ostream* out) { trace_ = out; }

 private:
  void observe();

  EnvConfig cfg_;
  Rng shuffle_rng_;
  std::vector<int> episode_perm_;
  sim::AppState state_;
  sim::RewardSpec reward_;
  feat::FeatureMatrix observation_;
  std::vector<bool> hit_;
  int steps_ = 0;
  int episode_ = -1;
  bool done_ = true;
  std::ostream* trace_ = nullptr;
};

class VecEnvError : public std::runtime_error {
 public:
  VecEnvError(std::size_t index, const std::string& what)
      : std::runtime_error("env " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Synchronous batch of independent environments with auto-reset.
class VecEnv {
 public:
  explicit VecEnv(std::vector<EnvConfig> configs);

  std::vector<feat::FeatureMatrix> reset();
  std::vector<StepResult> step(const std::vector<Action>& actions);

  std::size_t size() const { return envs_.size(); }
  AppEnv& at(std::size_t i) { return envs_.at(i); }
  const std::vector<feat::FeatureMatrix>& observations() const { return observations_; }

 private:
  std::vector<AppEnv> envs_;
  std::vector<feat::FeatureMatrix> observations_;
};

// `num_envs` copies of `base` whose shuffle seeds are derived from `seed`.
std::vector<EnvConfig> replicate(const EnvConfig& base, int num_envs, std::uint64_t seed);

}  // namespace appgym::env
