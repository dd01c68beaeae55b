#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "appgym/app_sim.hpp"

namespace appgym::sim {

// Reward magnitudes shared by every builtin task.
inline constexpr double kGoalReward = 1.0;
inline constexpr double kSubgoalReward = 0.5;
inline constexpr double kLargerSubgoalReward = 0.75;

// Names of the shipped app fixtures (compiled into the library).
std::vector<std::string> builtin_app_names();
std::shared_ptr<const AppDefinition> builtin_app(std::string_view name);
const std::string& builtin_app_source(std::string_view name);

// The twelve benchmark tasks: settings/split/alarm/shopping x easy/medium/hard.
const std::vector<TaskSpec>& builtin_benchmarks();
const TaskSpec& find_task(std::string_view task_id);

// Returns a copy of `task` running against `app` instead (same rewards and
// tokens), e.g. the alarm task on the native-clock clone.
TaskSpec retarget_task(const TaskSpec& task, std::shared_ptr<const AppDefinition> app,
                       std::string task_id);

class SearchBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OracleResult {
  int min_steps = 0;
  std::size_t states_explored = 0;
  std::vector<UiEvent> plan;
};

// Breadth-first search from hard reset over app states; actions are the first
// `max_elements` actionable elements, typed with every task token when
// editable and tapped otherwise.
OracleResult solve_min_steps(const TaskSpec& task, std::size_t state_bound = 1'000'000,
                             int max_elements = 20);
int min_steps_oracle(const TaskSpec& task, std::size_t state_bound = 1'000'000,
                     int max_elements = 20);

}  // namespace appgym::sim
