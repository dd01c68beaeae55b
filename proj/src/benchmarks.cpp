#include "appgym/benchmarks.hpp"

#include <deque>
#include <map>
#include <mutex>
#include <unordered_map>

#include "appgym/app_io.hpp"
#include "builtin_apps.inc"

namespace appgym::sim {

namespace {

using P = Predicate;

const std::map<std::string, std::string, std::less<>>& app_sources() {
  static const std::map<std::string, std::string, std::less<>> sources = {
      {"settings", kSettingsApp},
      {"split", kSplitApp},
      {"alarm", kAlarmApp},
      {"shopping", kShoppingApp},
      {"alarm_native_clone", kAlarmNativeCloneApp},
  };
  return sources;
}

TaskSpec make_task(std::string task_id, std::string description, std::string app,
                   std::vector<std::string> tokens, int min_steps, int budget,
                   std::vector<std::pair<Predicate, double>> subgoals, Predicate goal) {
  TaskSpec task;
  task.task_id = std::move(task_id);
  task.description = std::move(description);
  task.app = builtin_app(app);
  task.tokens = std::move(tokens);
  task.min_steps = min_steps;
  task.policy_update_budget = budget;
  for (auto& [predicate, reward] : subgoals) {
    task.reward.predicates.push_back(std::move(predicate));
    task.reward.rewards.push_back(reward);
  }
  task.reward.predicates.push_back(std::move(goal));
  task.reward.rewards.push_back(kGoalReward);
  task.reward.reset(false);
  return task;
}

std::vector<TaskSpec> make_benchmarks() {
  const double r = kSubgoalReward;
  const double big = kLargerSubgoalReward;
  std::vector<TaskSpec> tasks;

  const std::vector<std::string> wifi_tokens = {"Starbucks", "Airport", "Library", "Hotel"};
  tasks.push_back(make_task("settings-easy", "Navigate to Wi-Fi settings screen", "settings",
                            wifi_tokens, 1, 10, {}, P::screen_is("wifi_settings")));
  tasks.push_back(make_task("settings-medium", "Navigate to add new Wi-Fi network screen",
                            "settings", wifi_tokens, 2, 25,
                            {{P::screen_is("wifi_settings"), r}},
                            P::screen_is("add_network")));
  tasks.push_back(make_task(
      "settings-hard",
      "Navigate to add new Wi-Fi network screen and add a new network called Starbucks",
      "settings", wifi_tokens, 3, 25,
      {{P::screen_is("wifi_settings"), r}, {P::screen_is("add_network"), r}},
      P::all_of({P::screen_is("wifi_settings"), P::text_on_screen("Starbucks")})));

  const std::vector<std::string> split_tokens = {"Trip", "Alice", "Dinner", "25"};
  const std::vector<std::pair<Predicate, double>> split_easy_subgoals = {
      {P::screen_is("create_group"), r},
      {P::buffer_equals("group_name", "Trip"), r},
  };
  auto split_medium_subgoals = split_easy_subgoals;
  split_medium_subgoals.insert(split_medium_subgoals.end(),
                               {{P::list_contains("groups", "Trip"), r},
                                {P::screen_is("group"), r},
                                {P::screen_is("add_member"), r},
                                {P::buffer_equals("member_name", "Alice"), r}});
  auto split_hard_subgoals = split_medium_subgoals;
  split_hard_subgoals.insert(
      split_hard_subgoals.end(),
      {{P::list_contains("members", "Trip/Alice"), r},
       {P::screen_is("add_expense"), r},
       {P::any_of({P::buffer_equals("expense_name", "Dinner"),
                   P::buffer_equals("amount", "25")}),
        r},
       {P::all_of({P::buffer_equals("expense_name", "Dinner"),
                   P::buffer_equals("amount", "25")}),
        big}});
  tasks.push_back(make_task("split-easy", "Create a new expense splitting group", "split",
                            split_tokens, 4, 25, split_easy_subgoals,
                            P::list_contains("groups", "Trip")));
  tasks.push_back(make_task("split-medium",
                            "Create a new expense splitting group and add a new member to it",
                            "split", split_tokens, 8, 50, split_medium_subgoals,
                            P::list_contains("members", "Trip/Alice")));
  tasks.push_back(make_task("split-hard",
                            "Create a new expense splitting group, add a new member to it, "
                            "and create a new expense",
                            "split", split_tokens, 13, 75, split_hard_subgoals,
                            P::all_of({P::list_contains("members", "Trip/Alice"),
                                       P::list_contains("expenses", "Trip/Dinner - 25")})));

  const std::vector<std::string> alarm_tokens = {"7:00 AM", "7:00 PM", "9:00 AM", "12:00 PM"};
  const auto first = P::list_contains("alarms", "7:00 AM");
  const auto second = P::list_contains("alarms", "7:00 PM");
  const auto third = P::list_contains("alarms", "9:00 AM");
  tasks.push_back(make_task("alarm-easy", "Set one alarm clock", "alarm", alarm_tokens, 3, 25,
                            {}, first));
  tasks.push_back(make_task("alarm-medium", "Set two alarm clocks", "alarm", alarm_tokens, 6,
                            50, {{first, r}}, P::all_of({first, second})));
  tasks.push_back(make_task("alarm-hard", "Set three alarm clocks", "alarm", alarm_tokens, 9,
                            75,
                            {{first, r},
                             {second, r},
                             {third, r},
                             {P::at_least(2, {first, second, third}), big}},
                            P::all_of({first, second, third})));

  const std::vector<std::string> shopping_tokens = {"Milk", "Party", "Eggs", "Bread"};
  tasks.push_back(make_task("shopping-easy", "Add a new item to the default list", "shopping",
                            shopping_tokens, 2, 25, {},
                            P::list_contains("items", "Groceries/Milk")));
  tasks.push_back(make_task("shopping-medium", "Create a new list", "shopping",
                            shopping_tokens, 4, 30,
                            {{P::screen_is("more_options"), r}, {P::screen_is("new_list"), r}},
                            P::list_contains("lists", "Party")));
  tasks.push_back(make_task("shopping-hard", "Create a new list and add an item to it",
                            "shopping", shopping_tokens, 6, 50,
                            {{P::screen_is("more_options"), r},
                             {P::screen_is("new_list"), r},
                             {P::list_contains("lists", "Party"), r}},
                            P::list_contains("items", "Party/Milk")));
  return tasks;
}

}  // namespace

std::vector<std::string> builtin_app_names() {
  std::vector<std::string> names;
  for (const auto& [name, source] : app_sources()) names.push_back(name);
  return names;
}

const std::string& builtin_app_source(std::string_view name) {
  const auto it = app_sources().find(name);
  if (it == app_sources().end()) {
    throw std::invalid_argument("unknown builtin app: " + std::string(name));
  }
  return it->second;
}

std::shared_ptr<const AppDefinition> builtin_app(std::string_view name) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const AppDefinition>, std::less<>> cache;
  std::lock_guard lock(mutex);
  if (const auto it = cache.find(name); it != cache.end()) return it->second;
  auto def = std::make_shared<const AppDefinition>(
      parse_app_definition(builtin_app_source(name)));
  cache.emplace(std::string(name), def);
  return def;
}

const std::vector<TaskSpec>& builtin_benchmarks() {
  static const std::vector<TaskSpec> tasks = make_benchmarks();
  return tasks;
}

const TaskSpec& find_task(std::string_view task_id) {
  for (const auto& task : builtin_benchmarks()) {
    if (task.task_id == task_id) return task;
  }
  throw std::invalid_argument("unknown task: " + std::string(task_id));
}

TaskSpec retarget_task(const TaskSpec& task, std::shared_ptr<const AppDefinition> app,
                       std::string task_id) {
  TaskSpec out = task;
  out.app = std::move(app);
  out.task_id = std::move(task_id);
  return out;
}

OracleResult solve_min_steps(const TaskSpec& task, std::size_t state_bound,
                             int max_elements) {
  const Predicate& goal = task.reward.predicates.back();
  struct Visit {
    std::size_t parent;
    std::optional<UiEvent> event;
  };
  std::vector<Visit> visits;
  std::unordered_map<std::string, std::size_t> seen;

  auto plan_to = [&](std::size_t index) {
    std::vector<UiEvent> plan;
    while (visits[index].event) {
      plan.push_back(*visits[index].event);
      index = visits[index].parent;
    }
    return std::vector<UiEvent>(plan.rbegin(), plan.rend());
  };

  AppState start = hard_reset(task);
  if (goal.evaluate(start)) return {0, 1, {}};
  seen.emplace(start.key(), 0);
  visits.push_back({0, std::nullopt});
  std::deque<std::pair<std::size_t, AppState>> queue;
  queue.emplace_back(0, std::move(start));

  while (!queue.empty()) {
    auto [index, state] = std::move(queue.front());
    queue.pop_front();
    const auto elements = vh::actionable_elements(state.rendered);
    const std::size_t limit =
        std::min(elements.size(), static_cast<std::size_t>(max_elements));
    std::vector<UiEvent> events;
    for (std::size_t i = 0; i < limit; ++i) {
      if (elements[i].editable) {
        for (const auto& token : task.tokens) {
          events.push_back(UiEvent::type(elements[i].node_id, token));
        }
      } else {
        events.push_back(UiEvent::tap(elements[i].node_id));
      }
    }
    for (auto& event : events) {
      AppState next = apply_event(state, event);
      auto [it, inserted] = seen.emplace(next.key(), visits.size());
      if (!inserted) continue;
      visits.push_back({index, event});
      if (goal.evaluate(next)) {
        auto plan = plan_to(visits.size() - 1);
        return {static_cast<int>(plan.size()), seen.size(), std::move(plan)};
      }
      if (seen.size() >= state_bound) {
        throw SearchBudgetExceeded("task " + task.task_id + ": more than " +
                                   std::to_string(state_bound) + " states explored");
      }
      queue.emplace_back(visits.size() - 1, std::move(next));
    }
  }
  throw SearchBudgetExceeded("task " + task.task_id + ": goal unreachable");
}

int min_steps_oracle(const TaskSpec& task, std::size_t state_bound, int max_elements) {
  return solve_min_steps(task, state_bound, max_elements).min_steps;
}

}  // namespace appgym::sim
