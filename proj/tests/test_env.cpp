#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "appgym/benchmarks.hpp"
#include "appgym/env.hpp"

namespace appgym::env {
namespace {

EnvConfig config_for(std::string_view task_id, int horizon = 25, bool shuffle = false,
                     std::uint64_t shuffle_seed = 0) {
  EnvConfig cfg{sim::find_task(task_id)};
  cfg.horizon = horizon;
  cfg.shuffle = shuffle;
  cfg.shuffle_seed = shuffle_seed;
  return cfg;
}

int row_of(const feat::FeatureMatrix& obs, std::string_view node_id) {
  for (int i = 0; i < obs.n; ++i) {
    if (obs.action_map[i] && obs.action_map[i]->node_id == node_id) return i;
  }
  return -1;
}

TEST(Action, FlatRoundTripAndBounds) {
  for (int flat = 0; flat < 80; ++flat) {
    const auto a = Action::from_flat(flat);
    EXPECT_EQ(a.flat(), flat);
    EXPECT_EQ(a.element_index(), flat / 4);
    EXPECT_EQ(a.token_index(), flat % 4);
  }
  EXPECT_THROW(Action(20, 0), std::out_of_range);
  EXPECT_THROW(Action(0, 4), std::out_of_range);
  EXPECT_THROW(Action(-1, 0), std::out_of_range);
  EXPECT_THROW(Action::from_flat(80), std::out_of_range);
}

TEST(AppEnv, ShapesAndActionCount) {
  AppEnv env(config_for("alarm-easy"));
  const auto& obs = env.reset();
  EXPECT_EQ(obs.n, 20);
  EXPECT_EQ(obs.m, 871);
  EXPECT_EQ(env.config().num_actions(), 80);
}

TEST(AppEnv, SettingsEasyTapWifiEndsEpisode) {
  AppEnv env(config_for("settings-easy"));
  const auto obs = env.reset();
  const int wifi = row_of(obs, "wifi");
  ASSERT_GE(wifi, 0);
  const auto result = env.step(Action(wifi, 0));
  EXPECT_DOUBLE_EQ(result.reward, 1.0);
  EXPECT_TRUE(result.done);
  EXPECT_TRUE(result.info.goal_reached);
  EXPECT_FALSE(result.info.timed_out);
  EXPECT_EQ(result.info.steps_taken, 1);
  EXPECT_EQ(result.info.screen_id, "wifi_settings");
  EXPECT_THROW(env.step(Action(0, 0)), SteppedAfterDone);
}

TEST(AppEnv, EveryActionIsDefinedOnEveryScreen) {
  for (const auto& task : sim::builtin_benchmarks()) {
    EnvConfig cfg{task};
    AppEnv probe(cfg);
    probe.reset();
    for (int flat = 0; flat < cfg.num_actions(); ++flat) {
      AppEnv env(cfg);
      env.reset();
      const auto result = env.step(Action::from_flat(flat, cfg.n(), cfg.k_tok()));
      EXPECT_GE(result.reward, 0.0);
      EXPECT_EQ(result.observation.n, 20);
      EXPECT_EQ(result.info.was_noop, !probe.observation().action_map[flat / 4].has_value());
    }
  }
}

TEST(AppEnv, PaddingRowIsNoOp) {
  AppEnv env(config_for("alarm-easy"));
  const auto before = env.reset();
  const int padding = before.element_count();
  ASSERT_LT(padding, 20);
  const auto state = env.state();
  const auto result = env.step(Action(padding, 2));
  EXPECT_TRUE(result.info.was_noop);
  EXPECT_EQ(result.reward, 0.0);
  EXPECT_EQ(env.state(), state);
  EXPECT_EQ(result.observation, before);
  EXPECT_EQ(result.info.steps_taken, 1);
}

TEST(AppEnv, TimesOutAtHorizon) {
  AppEnv env(config_for("shopping-hard", 5));
  const auto obs = env.reset();
  const int padding = obs.element_count();
  for (int t = 1; t <= 5; ++t) {
    const auto result = env.step(Action(padding, 0));
    EXPECT_EQ(result.done, t == 5);
    EXPECT_EQ(result.info.timed_out, t == 5);
  }
  EXPECT_THROW(env.step(Action(0, 0)), SteppedAfterDone);
  env.reset();
  EXPECT_FALSE(env.done());
  EXPECT_EQ(env.steps_taken(), 0);
}

TEST(AppEnv, RewardsFollowTheOptimalPlan) {
  for (const auto& task : sim::builtin_benchmarks()) {
    const auto plan = sim::solve_min_steps(task).plan;
    AppEnv env(EnvConfig{task});
    auto obs = env.reset();
    double total = 0.0;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const int row = row_of(obs, plan[i].node_id());
      ASSERT_GE(row, 0) << task.task_id;
      int token = 0;
      if (plan[i].token()) {
        token = static_cast<int>(std::find(task.tokens.begin(), task.tokens.end(), *plan[i].token()) -
                                 task.tokens.begin());
      }
      const auto result = env.step(Action(row, token));
      total += result.reward;
      EXPECT_EQ(result.done, i + 1 == plan.size()) << task.task_id;
      obs = result.observation;
    }
    EXPECT_DOUBLE_EQ(total, task.reward.max_total()) << task.task_id;
  }
}

TEST(AppEnv, ShuffledRowsAreAPermutationOfUnshuffledRows) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AppEnv plain(config_for("split-easy"));
    AppEnv shuffled(config_for("split-easy", 25, true, seed));
    auto a = plain.reset();
    auto b = shuffled.reset();
    Rng rng(seed);
    for (int t = 0; t < 10; ++t) {
      auto rows_a = a.rows;
      auto rows_b = b.rows;
      auto by_indices = [](const feat::SparseVector& x, const feat::SparseVector& y) {
        return std::tie(x.indices, x.values) < std::tie(y.indices, y.values);
      };
      std::sort(rows_a.begin(), rows_a.end(), by_indices);
      std::sort(rows_b.begin(), rows_b.end(), by_indices);
      EXPECT_EQ(rows_a, rows_b);
      const int count = a.element_count();
      if (count == 0) break;
      const int row_a = static_cast<int>(uniform_index(rng, count));
      const int row_b = row_of(b, a.action_map[row_a]->node_id);
      ASSERT_GE(row_b, 0);
      const auto ra = plain.step(Action(row_a, 1));
      const auto rb = shuffled.step(Action(row_b, 1));
      EXPECT_EQ(ra.reward, rb.reward);
      EXPECT_EQ(ra.done, rb.done);
      if (ra.done) break;
      a = ra.observation;
      b = rb.observation;
    }
  }
}

TEST(AppEnv, ShuffleIsFixedWithinAnEpisode) {
  AppEnv env(config_for("alarm-easy", 25, true, 3));
  const auto first = env.reset();
  const int padding = first.element_count();
  const auto again = env.step(Action(padding, 0)).observation;
  EXPECT_EQ(first, again);
}

TEST(AppEnv, ShuffleChangesAcrossEpisodes) {
  AppEnv env(config_for("settings-easy", 25, true, 3));
  const auto first = env.reset();
  bool changed = false;
  for (int episode = 0; episode < 10 && !changed; ++episode) changed = env.reset() != first;
  EXPECT_TRUE(changed);
}

TEST(AppEnv, TraceHasOneLinePerStep) {
  AppEnv env(config_for("settings-easy"));
  std::ostringstream trace;
  env.set_trace(&trace);
  const auto obs = env.reset();
  env.step(Action(obs.element_count(), 0));
  env.step(Action(row_of(obs, "wifi"), 3));
  std::istringstream lines(trace.str());
  std::string line;
  std::vector<nlohmann::json> parsed;
  while (std::getline(lines, line)) parsed.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(parsed.size(), 2u);
  EXPECT_EQ(parsed[0]["event"], "noop");
  EXPECT_EQ(parsed[1]["event"], "tap");
  EXPECT_EQ(parsed[1]["node_id"], "wifi");
  EXPECT_EQ(parsed[1]["reward"], 1.0);
  EXPECT_EQ(parsed[1]["done"], true);
  EXPECT_EQ(parsed[1]["step"], 2);
  EXPECT_EQ(parsed[1]["token_index"], 3);
}

TEST(VecEnv, MatchesIndependentEnvsAndAutoResets) {
  const auto configs = replicate(config_for("alarm-medium", 6, true), 3, 11);
  VecEnv venv(configs);
  std::vector<AppEnv> singles(configs.begin(), configs.end());
  auto batch = venv.reset();
  for (std::size_t i = 0; i < singles.size(); ++i) EXPECT_EQ(batch[i], singles[i].reset());

  Rng rng(5);
  int resets = 0;
  for (int t = 0; t < 40; ++t) {
    std::vector<Action> actions;
    for (std::size_t i = 0; i < singles.size(); ++i) {
      actions.push_back(Action::from_flat(static_cast<int>(uniform_index(rng, 80))));
    }
    const auto results = venv.step(actions);
    for (std::size_t i = 0; i < singles.size(); ++i) {
      const auto single = singles[i].step(actions[i]);
      EXPECT_EQ(results[i].reward, single.reward);
      EXPECT_EQ(results[i].done, single.done);
      if (single.done) {
        ++resets;
        ASSERT_TRUE(results[i].info.terminal_observation.has_value());
        EXPECT_EQ(*results[i].info.terminal_observation, single.observation);
        EXPECT_EQ(results[i].observation, singles[i].reset());
      } else {
        EXPECT_FALSE(results[i].info.terminal_observation.has_value());
        EXPECT_EQ(results[i].observation, single.observation);
      }
      EXPECT_EQ(venv.observations()[i], results[i].observation);
    }
  }
  EXPECT_GT(resets, 0);
}

TEST(VecEnv, ReportsFailingIndex) {
  auto narrow = config_for("alarm-easy");
  narrow.featurizer.n = 10;
  VecEnv venv({config_for("alarm-easy"), narrow});
  venv.reset();
  EXPECT_THROW(venv.step({Action(0, 0)}), std::invalid_argument);
  try {
    venv.step({Action(15, 0), Action(15, 0)});
    FAIL() << "expected VecEnvError";
  } catch (const VecEnvError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
  EnvConfig bad = config_for("alarm-easy");
  bad.task.tokens.clear();
  EXPECT_THROW(VecEnv({bad}), std::invalid_argument);
}

TEST(Replicate, DerivesDistinctSeeds) {
  const auto configs = replicate(config_for("alarm-easy"), 4, 9);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(configs[i].shuffle_seed, derive_seed(9, i));
    for (int j = 0; j < i; ++j) EXPECT_NE(configs[i].shuffle_seed, configs[j].shuffle_seed);
  }
}

}  // namespace
}  // namespace appgym::env
