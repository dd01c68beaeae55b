#include "appgym/env.hpp"

#include <ostream>

#include <nlohmann/json.hpp>

namespace appgym::env {

Action::Action(int element_index, int token_index, int n, int k_tok)
    : element_index_(element_index), token_index_(token_index) {
  if (element_index < 0 || element_index >= n) {
    throw std::out_of_range("element index " + std::to_string(element_index) + " outside [0, " +
                            std::to_string(n) + ")");
  }
  if (token_index < 0 || token_index >= k_tok) {
    throw std::out_of_range("token index " + std::to_string(token_index) + " outside [0, " +
                            std::to_string(k_tok) + ")");
  }
}

Action Action::from_flat(int flat, int n, int k_tok) {
  if (flat < 0 || flat >= n * k_tok) {
    throw std::out_of_range("flat action " + std::to_string(flat) + " out of range");
  }
  return Action(flat / k_tok, flat % k_tok, n, k_tok);
}

AppEnv::AppEnv(EnvConfig cfg) : cfg_(std::move(cfg)), shuffle_rng_(cfg_.shuffle_seed) {
  if (cfg_.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  if (cfg_.task.tokens.empty()) throw std::invalid_argument("task has no tokens");
  if (!cfg_.featurizer.embedder) throw std::invalid_argument("featurizer has no embedder");
}

void AppEnv::observe() {
  if (cfg_.shuffle) {
    const int count = std::min(
        static_cast<int>(vh::actionable_elements(state_.rendered).size()), cfg_.n());
    const auto perm = feat::induced_perm(episode_perm_, count);
    observation_ = feat::featurize(state_.rendered, cfg_.featurizer, &perm);
  } else {
    observation_ = feat::featurize(state_.rendered, cfg_.featurizer);
  }
}

const feat::FeatureMatrix& AppEnv::reset() {
  state_ = sim::hard_reset(cfg_.task);
  reward_ = cfg_.task.fresh_reward();
  hit_.assign(reward_.predicates.size(), false);
  steps_ = 0;
  ++episode_;
  done_ = false;
  if (cfg_.shuffle) episode_perm_ = feat::make_shuffle_perm(shuffle_rng_(), cfg_.n());
  observe();
  return observation_;
}

StepResult AppEnv::step(const Action& action) {
  if (done_) throw SteppedAfterDone();
  const Action checked(action.element_index(), action.token_index(), cfg_.n(), cfg_.k_tok());
  const auto& target = observation_.action_map[checked.element_index()];

  StepResult result;
  result.info.was_noop = !target.has_value();
  std::optional<sim::UiEvent> event;
  if (target) {
    event = target->editable
                ? sim::UiEvent::type(target->node_id, cfg_.task.tokens[checked.token_index()])
                : sim::UiEvent::tap(target->node_id);
    state_ = sim::apply_event(state_, *event);
  }
  ++steps_;
  const auto outcome = sim::reward_step(reward_, state_);
  for (int i : outcome.fired) hit_[i] = true;
  observe();

  result.reward = outcome.reward;
  result.info.goal_reached = outcome.done;
  result.info.timed_out = !outcome.done && steps_ >= cfg_.horizon;
  result.done = result.info.goal_reached || result.info.timed_out;
  result.info.steps_taken = steps_;
  result.info.sub_goals_hit = hit_;
  result.info.screen_id = state_.screen_id;
  result.observation = observation_;
  done_ = result.done;

  if (trace_) {
    nlohmann::ordered_json line;
    line["episode"] = episode_;
    line["step"] = steps_;
    line["element_index"] = checked.element_index();
    line["token_index"] = checked.token_index();
    line["event"] = event ? std::string(sim::to_string(event->kind())) : "noop";
    line["node_id"] = event ? event->node_id() : "";
    line["reward"] = result.reward;
    line["done"] = result.done;
    line["screen_id"] = state_.screen_id;
    *trace_ << line.dump() << '\n';
  }
  return result;
}

VecEnv::VecEnv(std::vector<EnvConfig> configs) {
  if (configs.empty()) throw std::invalid_argument("vector env needs at least one env");
  envs_.reserve(configs.size());
  for (auto& cfg : configs) envs_.emplace_back(std::move(cfg));
}

std::vector<feat::FeatureMatrix> VecEnv::reset() {
  observations_.clear();
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    try {
      observations_.push_back(envs_[i].reset());
    } catch (const std::exception& e) {
      throw VecEnvError(i, e.what());
    }
  }
  return observations_;
}

std::vector<StepResult> VecEnv::step(const std::vector<Action>& actions) {
  if (actions.size() != envs_.size()) {
    throw std::invalid_argument("expected " + std::to_string(envs_.size()) + " actions, got " +
                                std::to_string(actions.size()));
  }
  std::vector<StepResult> results;
  results.reserve(envs_.size());
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    try {
      auto result = envs_[i].step(actions[i]);
      if (result.done) {
        result.info.terminal_observation = std::move(result.observation);
        result.observation = envs_[i].reset();
      }
      observations_[i] = result.observation;
      results.push_back(std::move(result));
    } catch (const std::exception& e) {
      throw VecEnvError(i, e.what());
    }
  }
  return results;
}

std::vector<EnvConfig> replicate(const EnvConfig& base, int num_envs, std::uint64_t seed) {
  std::vector<EnvConfig> out(static_cast<std::size_t>(num_envs), base);
  for (int i = 0; i < num_envs; ++i) out[i].shuffle_seed = derive_seed(seed, i);
  return out;
}

}  // namespace appgym::env
