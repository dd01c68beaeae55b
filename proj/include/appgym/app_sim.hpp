#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "appgym/view_hierarchy.hpp"

namespace appgym::sim {

class UnknownNode : public std::runtime_error {
 public:
  explicit UnknownNode(const std::string& node_id)
      : std::runtime_error("unknown node on current screen: " + node_id) {}
};

enum class EventKind { kTap, kType };

std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view name);

class UiEvent {
 public:
  static UiEvent tap(std::string node_id);
  static UiEvent type(std::string node_id, std::string token);

  EventKind kind() const { return kind_; }
  const std::string& node_id() const { return node_id_; }
  const std::optional<std::string>& token() const { return token_; }

 private:
  UiEvent(EventKind kind, std::string node_id, std::optional<std::string> token)
      : kind_(kind), node_id_(std::move(node_id)), token_(std::move(token)) {}

  EventKind kind_;
  std::string node_id_;
  std::optional<std::string> token_;
};

// Mutable app data rendered into screens: scalar variables plus ordered
// collections. Collections behave as ordered sets (appends skip duplicates).
struct Store {
  std::map<std::string, std::string> vars;
  std::map<std::string, std::vector<std::string>> lists;

  bool operator==(const Store&) const = default;
};

// Renders one child per matching entry of `list`. Entries must start with the
// expanded `filter_prefix`; the prefix is stripped from the displayed text.
struct BindSpec {
  std::string list;
  std::string filter_prefix;
  bool item_clickable = true;

  bool operator==(const BindSpec&) const = default;
};

struct NodeTemplate {
  std::string node_id;
  std::string text;
  bool clickable = false;
  bool editable = false;
  std::optional<BindSpec> bind;
  std::vector<NodeTemplate> children;

  bool operator==(const NodeTemplate&) const = default;
};

struct ScreenTemplate {
  std::string screen_id;
  NodeTemplate root;

  bool operator==(const ScreenTemplate&) const = default;
};

// Values may reference `${node:<id>}` (edit buffer on the current screen),
// `${var:<name>}` and `${item}` (text of the tapped bound item).
struct Effect {
  enum class Kind { kGoto, kAppend, kRemove, kSet };
  Kind kind = Kind::kGoto;
  std::string target;
  std::string value;

  bool operator==(const Effect&) const = default;
};

struct Transition {
  std::string from_screen;
  std::string node_id;  // template node id; bound items use their bind node
  EventKind event = EventKind::kTap;
  std::optional<std::string> token_guard;
  std::vector<std::string> require_nonempty;
  std::vector<Effect> effects;

  bool operator==(const Transition&) const = default;
};

struct AppDefinition {
  std::string app_id;
  std::vector<ScreenTemplate> screens;
  std::vector<Transition> transitions;
  std::string initial_screen;
  Store store;

  const ScreenTemplate* find_screen(std::string_view screen_id) const;
  bool operator==(const AppDefinition&) const = default;
};

class DanglingReference : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDefinition : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws DanglingReference / InvalidDefinition.
void validate(const AppDefinition& def);

struct NodeOrigin {
  std::string template_id;
  std::optional<std::string> item;
};

// Current screen + store. `rendered` is a pure function of
// (screen_id, store, buffers).
struct AppState {
  std::shared_ptr<const AppDefinition> definition;
  std::string screen_id;
  Store store;
  std::map<std::string, std::string> buffers;
  vh::Screen rendered;
  std::map<std::string, NodeOrigin> origins;

  // Compact key over the dynamic part of the state.
  std::string key() const;
  bool operator==(const AppState& other) const;
};

AppState initial_state(std::shared_ptr<const AppDefinition> definition);
void render(AppState& state);
AppState apply_event(const AppState& state, const UiEvent& event);

// Goal and sub-goal predicates over app state.
struct Predicate {
  enum class Kind {
    kScreenIs,      // arg = screen id
    kListContains,  // arg = list, value = entry
    kBufferEquals,  // arg = node id, value = expected buffer
    kTextOnScreen,  // value = text
    kAtLeast,       // count of operands that hold >= count
    kAllOf,
    kAnyOf,
  };
  Kind kind = Kind::kScreenIs;
  std::string arg;
  std::string value;
  int count = 0;
  std::vector<Predicate> operands;

  static Predicate screen_is(std::string screen_id);
  static Predicate list_contains(std::string list, std::string value);
  static Predicate buffer_equals(std::string node_id, std::string value);
  static Predicate text_on_screen(std::string text);
  static Predicate at_least(int count, std::vector<Predicate> operands);
  static Predicate all_of(std::vector<Predicate> operands);
  static Predicate any_of(std::vector<Predicate> operands);

  bool evaluate(const AppState& state) const;
  std::string describe() const;
};

// Predicates P_0..P_{k-1} are sub-goals, the last entry is the goal P_k.
// `flags` are the per-episode w_i and only ever go from true to false.
struct RewardSpec {
  std::vector<Predicate> predicates;
  std::vector<double> rewards;
  std::vector<bool> flags;

  std::size_t num_subgoals() const { return predicates.size() - 1; }
  double max_total() const;
  void reset(bool sparse);
};

struct RewardOutcome {
  double reward = 0.0;
  bool done = false;
  std::vector<int> fired;
};

RewardOutcome reward_step(RewardSpec& spec, const AppState& state);

struct TaskSpec {
  std::string task_id;
  std::string description;
  std::shared_ptr<const AppDefinition> app;
  RewardSpec reward;
  std::vector<std::string> tokens;
  int min_steps = 0;
  int policy_update_budget = 0;
  bool sparse_variant = false;

  RewardSpec fresh_reward() const;
};

AppState hard_reset(const TaskSpec& task);

// Same state machine with texts rewritten by `text_map` and node ids replaced
// by fresh ones scoped to `new_app_id`. Editable nodes keep their text so an
// empty description keeps exposing the edit buffer.
AppDefinition clone_app_variant(const AppDefinition& def,
                                const std::map<std::string, std::string>& text_map,
                                const std::string& new_app_id);

}  // namespace appgym::sim
