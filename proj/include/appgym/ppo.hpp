#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "appgym/env.hpp"
#include "appgym/nnet.hpp"
#include "appgym/rng.hpp"

namespace appgym::ppo {

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PPOConfig {
  int epochs = 4;
  double learning_rate = 3e-4;
  int minibatch_size = 0;  // 0 means num_envs
  double gamma = 0.99;
  double vf_coef = 0.5;
  double clip_eps = 0.2;
  double ent_coef = 0.01;
  int n_steps = 128;
  int num_envs = 35;
  std::uint64_t seed = 0;
  bool use_gae = false;
  double gae_lambda = 0.95;
  bool normalize_advantages = true;
  bool bootstrap_on_timeout = true;
  double max_grad_norm = 0.5;

  int effective_minibatch() const { return minibatch_size > 0 ? minibatch_size : num_envs; }
  // Throws std::invalid_argument.
  void validate() const;
  bool operator==(const PPOConfig&) const = default;
};

// Appends the flattened (row-major) observation as one sparse input row.
void append_observation(nn::SparseBatch& batch, const feat::FeatureMatrix& obs);
nn::SparseBatch observations_to_batch(const std::vector<feat::FeatureMatrix>& obs);

// Storage is time-major: sample index = t * num_envs + e.
struct RolloutBuffer {
  int num_envs = 0;
  int n_steps = 0;
  nn::SparseBatch observations;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> log_probs;
  std::vector<char> dones;
  std::vector<char> goal_dones;
  // Value of the terminal observation when an episode timed out, else 0.
  std::vector<double> terminal_values;
  // Value of the observation following the last step of each env.
  std::vector<double> last_values;

  std::size_t size() const { return actions.size(); }
  std::size_t index(int t, int e) const { return static_cast<std::size_t>(t) * num_envs + e; }
};

struct Targets {
  std::vector<double> returns;
  std::vector<double> advantages;
};

// n-step bootstrapped targets by backward recursion within each env stream
// (or GAE when `use_gae`). Goal terminations bootstrap with 0; timeouts with
// the terminal value when `bootstrap_on_timeout`, else 0.
Targets compute_targets(const RolloutBuffer& buffer, double gamma, bool use_gae = false,
                        double lambda = 0.95, bool bootstrap_on_timeout = true);

struct LossTerms {
  double loss = 0.0;
  double policy_loss = 0.0;  // -L^CLIP
  double value_loss = 0.0;   // mean squared error
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double max_ratio_deviation = 0.0;  // max |rho - 1|
  nn::Matrix dlogits;
  nn::Vector dvalues;
};

// loss = -mean(min(rho A, clip(rho) A)) + vf_coef mean((v - R)^2)
//        - ent_coef mean(H); returns gradients w.r.t. logits and values.
LossTerms ppo_loss(const nn::Matrix& logits, const nn::Vector& values,
                   const std::vector<int>& actions, const std::vector<double>& old_log_probs,
                   const std::vector<double>& advantages, const std::vector<double>& returns,
                   double clip_eps, double vf_coef, double ent_coef);

struct Policy {
  nn::PolicyParams params;
  nn::OptState opt;
};

Policy make_policy(const nn::NetSpec& spec, const PPOConfig& cfg);

// Samples from softmax(logits); `greedy` takes the arg-max instead.
int sample_action(const double* logits, int count, Rng& rng, bool greedy = false);

struct EpisodeStats {
  std::vector<double> returns;
  std::vector<int> lengths;
  std::vector<char> successes;
};

class RolloutCollector {
 public:
  RolloutCollector(env::VecEnv& venv, std::uint64_t seed);

  RolloutBuffer collect(const nn::PolicyParams& params, int n_steps, EpisodeStats& stats);

 private:
  env::VecEnv& venv_;
  Rng rng_;
  std::vector<double> running_return_;
  std::vector<int> running_length_;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  double first_minibatch_max_ratio_error = 0.0;
  int minibatches = 0;
};

UpdateStats update(Policy& policy, const RolloutBuffer& buffer, const Targets& targets,
                   const PPOConfig& cfg, Rng& rng);

struct MetricsRow {
  int update = 0;
  std::int64_t env_steps = 0;
  int episodes = 0;
  double mean_episode_reward = 0.0;
  double mean_episode_length = 0.0;
  double train_success = 0.0;
  std::optional<double> eval_success;
  std::optional<double> eval_half_width;
  UpdateStats stats;
};

// Column order of the metrics CSV.
const std::vector<std::string>& metrics_columns();
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

struct TrainResult {
  Policy policy;
  std::vector<MetricsRow> metrics;
};

struct TrainOptions {
  int updates = 0;
  // Called after each update with the 1-based update index; may return an
  // evaluation (success rate, half-width) to record in the metrics row.
  std::function<std::optional<std::pair<double, double>>(int, const Policy&)> eval_hook;
  std::ostream* metrics_out = nullptr;
  std::ostream* timing_out = nullptr;
  std::optional<std::filesystem::path> checkpoint_dir;
  int checkpoint_every = 0;
  // Checked after each update; returning true ends training.
  std::function<bool(const MetricsRow&)> stop_when;
};

TrainResult train(const env::EnvConfig& env_cfg, const nn::NetSpec& spec, const PPOConfig& cfg,
                  const TrainOptions& options);

}  // namespace appgym::ppo
