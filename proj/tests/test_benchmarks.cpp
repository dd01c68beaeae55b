#include <gtest/gtest.h>

#include <chrono>
#include <map>

#include "appgym/benchmarks.hpp"

namespace appgym::sim {
namespace {

struct Expected {
  int min_steps;
  int budget;
  std::size_t subgoals;
};

const std::map<std::string, Expected>& table() {
  static const std::map<std::string, Expected> expected = {
      {"settings-easy", {1, 10, 0}},   {"settings-medium", {2, 25, 1}},
      {"settings-hard", {3, 25, 2}},   {"split-easy", {4, 25, 2}},
      {"split-medium", {8, 50, 6}},    {"split-hard", {13, 75, 10}},
      {"alarm-easy", {3, 25, 0}},      {"alarm-medium", {6, 50, 1}},
      {"alarm-hard", {9, 75, 4}},      {"shopping-easy", {2, 25, 0}},
      {"shopping-medium", {4, 30, 2}}, {"shopping-hard", {6, 50, 3}},
  };
  return expected;
}

TEST(Benchmarks, TwelveTasksWithTableValues) {
  const auto& tasks = builtin_benchmarks();
  ASSERT_EQ(tasks.size(), 12u);
  for (const auto& task : tasks) {
    const auto it = table().find(task.task_id);
    ASSERT_NE(it, table().end()) << task.task_id;
    EXPECT_EQ(task.min_steps, it->second.min_steps) << task.task_id;
    EXPECT_EQ(task.policy_update_budget, it->second.budget) << task.task_id;
    EXPECT_EQ(task.reward.num_subgoals(), it->second.subgoals) << task.task_id;
    EXPECT_EQ(task.tokens.size(), 4u);
    EXPECT_EQ(task.reward.predicates.size(), task.reward.rewards.size());
    EXPECT_EQ(task.reward.predicates.size(), task.reward.flags.size());
    EXPECT_DOUBLE_EQ(task.reward.rewards.back(), kGoalReward);
    for (double r : task.reward.rewards) EXPECT_GT(r, 0.0);
  }
}

TEST(Benchmarks, AlarmHardHasLargerAnyTwoReward) {
  const auto& spec = find_task("alarm-hard").reward;
  ASSERT_EQ(spec.num_subgoals(), 4u);
  EXPECT_EQ(spec.predicates[3].kind, Predicate::Kind::kAtLeast);
  EXPECT_EQ(spec.predicates[3].count, 2);
  EXPECT_GT(spec.rewards[3], spec.rewards[0]);
}

TEST(Benchmarks, UnknownTaskThrows) { EXPECT_THROW(find_task("nope"), std::invalid_argument); }

TEST(Oracle, ReproducesMinimumStepsQuickly) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& task : builtin_benchmarks()) {
    EXPECT_EQ(min_steps_oracle(task), table().at(task.task_id).min_steps) << task.task_id;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 10.0);
}

TEST(Oracle, GoalAtResetIsZero) {
  auto task = find_task("settings-easy");
  task.reward.predicates.back() = Predicate::screen_is("main");
  EXPECT_EQ(min_steps_oracle(task), 0);
}

TEST(Oracle, BoundExceededThrows) {
  EXPECT_THROW(solve_min_steps(find_task("split-hard"), 50), SearchBudgetExceeded);
}

TEST(Oracle, OptimalPlanFiresEverySubgoal) {
  for (const auto& task : builtin_benchmarks()) {
    const auto result = solve_min_steps(task);
    ASSERT_EQ(static_cast<int>(result.plan.size()), result.min_steps);
    auto spec = task.fresh_reward();
    auto state = hard_reset(task);
    std::vector<bool> fired(spec.predicates.size(), false);
    bool done = false;
    for (const auto& event : result.plan) {
      ASSERT_FALSE(done);
      state = apply_event(state, event);
      const auto out = reward_step(spec, state);
      for (int i : out.fired) fired[i] = true;
      done = out.done;
    }
    EXPECT_TRUE(done) << task.task_id;
    for (std::size_t i = 0; i < fired.size(); ++i) {
      EXPECT_TRUE(fired[i]) << task.task_id << " predicate " << i << ": "
                            << spec.predicates[i].describe();
    }
  }
}

TEST(Oracle, InvariantUnderTextRelabelling) {
  const std::map<std::string, std::string> relabel = {
      {"", "add alarm"}, {"OK", "Done"}, {"Wi-Fi", "Wireless"}, {"Add", "Plus"},
      {"More options", "Overflow"}};
  for (const auto& task : builtin_benchmarks()) {
    const auto variant = std::make_shared<const AppDefinition>(
        clone_app_variant(*task.app, relabel, task.app->app_id + "_v"));
    const auto retargeted = retarget_task(task, variant, task.task_id + "-v");
    EXPECT_EQ(min_steps_oracle(retargeted), task.min_steps) << task.task_id;
  }
}

TEST(Oracle, NativeCloneKeepsAlarmFlow) {
  const auto clone = builtin_app("alarm_native_clone");
  const auto task = retarget_task(find_task("alarm-easy"), clone, "alarm-easy-native");
  EXPECT_EQ(min_steps_oracle(task), 3);
}

}  // namespace
}  // namespace appgym::sim
