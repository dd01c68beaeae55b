#include "appgym/app_sim.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>
#include <utility>

namespace appgym::sim {

std::string_view to_string(EventKind kind) {
  return kind == EventKind::kTap ? "tap" : "type";
}

EventKind event_kind_from_string(std::string_view name) {
  if (name == "tap") return EventKind::kTap;
  if (name == "type") return EventKind::kType;
  throw std::invalid_argument("unknown event kind: " + std::string(name));
}

UiEvent UiEvent::tap(std::string node_id) {
  return UiEvent(EventKind::kTap, std::move(node_id), std::nullopt);
}

UiEvent UiEvent::type(std::string node_id, std::string token) {
  return UiEvent(EventKind::kType, std::move(node_id), std::move(token));
}

const ScreenTemplate* AppDefinition::find_screen(std::string_view screen_id) const {
  for (const auto& screen : screens) {
    if (screen.screen_id == screen_id) return &screen;
  }
  return nullptr;
}

namespace {

const NodeTemplate* find_template(const NodeTemplate& root, std::string_view id) {
  if (root.node_id == id) return &root;
  for (const auto& child : root.children) {
    if (const auto* found = find_template(child, id)) return found;
  }
  return nullptr;
}

void for_each_template(const NodeTemplate& node,
                       const std::function<void(const NodeTemplate&)>& fn) {
  fn(node);
  for (const auto& child : node.children) for_each_template(child, fn);
}

// Collects `${node:<id>}` references in a value template.
std::vector<std::string> node_refs(const std::string& value) {
  std::vector<std::string> refs;
  std::size_t pos = 0;
  while ((pos = value.find("${node:", pos)) != std::string::npos) {
    const auto end = value.find('}', pos);
    if (end == std::string::npos) break;
    refs.push_back(value.substr(pos + 7, end - pos - 7));
    pos = end + 1;
  }
  return refs;
}

struct ExpandContext {
  const std::map<std::string, std::string>* buffers = nullptr;
  const std::map<std::string, std::string>* vars = nullptr;
  const std::optional<std::string>* item = nullptr;
};

std::string expand(const std::string& value, const ExpandContext& ctx) {
  std::string out;
  std::size_t pos = 0;
  while (pos < value.size()) {
    const auto start = value.find("${", pos);
    if (start == std::string::npos) {
      out.append(value, pos, std::string::npos);
      break;
    }
    out.append(value, pos, start - pos);
    const auto end = value.find('}', start);
    if (end == std::string::npos) {
      out.append(value, start, std::string::npos);
      break;
    }
    const std::string ref = value.substr(start + 2, end - start - 2);
    auto lookup = [](const std::map<std::string, std::string>* table,
                     const std::string& key) -> std::string {
      if (table == nullptr) return {};
      const auto it = table->find(key);
      return it == table->end() ? std::string{} : it->second;
    };
    if (ref.rfind("node:", 0) == 0) {
      out += lookup(ctx.buffers, ref.substr(5));
    } else if (ref.rfind("var:", 0) == 0) {
      out += lookup(ctx.vars, ref.substr(4));
    } else if (ref == "item") {
      if (ctx.item != nullptr && ctx.item->has_value()) out += **ctx.item;
    }
    pos = end + 1;
  }
  return out;
}

void render_node(const NodeTemplate& tmpl, const AppState& state,
                 vh::ViewNode& out, std::map<std::string, NodeOrigin>& origins) {
  out.node_id = tmpl.node_id;
  out.text = tmpl.text;
  out.clickable = tmpl.clickable;
  out.editable = tmpl.editable;
  if (tmpl.editable) {
    const auto it = state.buffers.find(tmpl.node_id);
    if (it != state.buffers.end()) out.edit_buffer = it->second;
  }
  origins[tmpl.node_id] = NodeOrigin{tmpl.node_id, std::nullopt};
  if (tmpl.bind) {
    const ExpandContext ctx{&state.buffers, &state.store.vars, nullptr};
    const std::string prefix = expand(tmpl.bind->filter_prefix, ctx);
    const auto list_it = state.store.lists.find(tmpl.bind->list);
    if (list_it == state.store.lists.end()) return;
    const auto& entries = list_it->second;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].rfind(prefix, 0) != 0) continue;
      vh::ViewNode item;
      item.node_id = tmpl.node_id + "[" + std::to_string(i) + "]";
      item.text = entries[i].substr(prefix.size());
      item.clickable = tmpl.bind->item_clickable;
      origins[item.node_id] = NodeOrigin{tmpl.node_id, item.text};
      out.children.push_back(std::move(item));
    }
    return;
  }
  out.children.resize(tmpl.children.size());
  for (std::size_t i = 0; i < tmpl.children.size(); ++i) {
    render_node(tmpl.children[i], state, out.children[i], origins);
  }
}

const Transition* find_transition(const AppDefinition& def,
                                  const std::string& screen_id,
                                  const std::string& template_id,
                                  EventKind kind,
                                  const std::optional<std::string>& token) {
  const Transition* fallback = nullptr;
  for (const auto& t : def.transitions) {
    if (t.event != kind || t.node_id != template_id || t.from_screen != screen_id) {
      continue;
    }
    if (!t.token_guard) {
      fallback = &t;
    } else if (token && *t.token_guard == *token) {
      return &t;
    }
  }
  return fallback;
}

}  // namespace

void validate(const AppDefinition& def) {
  if (def.app_id.empty()) throw InvalidDefinition("app_id is empty");
  if (def.find_screen(def.initial_screen) == nullptr) {
    throw DanglingReference("initial_screen '" + def.initial_screen +
                            "' is not a declared screen");
  }
  std::set<std::string> screen_ids;
  for (const auto& screen : def.screens) {
    if (!screen_ids.insert(screen.screen_id).second) {
      throw InvalidDefinition("duplicate screen_id '" + screen.screen_id + "'");
    }
    std::set<std::string> node_ids;
    for_each_template(screen.root, [&](const NodeTemplate& node) {
      if (node.node_id.empty()) {
        throw InvalidDefinition("empty node_id on screen '" + screen.screen_id + "'");
      }
      if (node.node_id.find('[') != std::string::npos) {
        throw InvalidDefinition("node_id '" + node.node_id + "' may not contain '['");
      }
      if (!node_ids.insert(node.node_id).second) {
        throw InvalidDefinition("duplicate node_id '" + node.node_id +
                                "' on screen '" + screen.screen_id + "'");
      }
      if (node.bind) {
        if (!node.children.empty()) {
          throw InvalidDefinition("bound node '" + node.node_id +
                                  "' may not declare static children");
        }
        if (!node_refs(node.bind->filter_prefix).empty()) {
          throw InvalidDefinition("bound node '" + node.node_id +
                                  "' filter_prefix may only reference vars");
        }
        if (!def.store.lists.contains(node.bind->list)) {
          throw DanglingReference("node '" + node.node_id + "' binds undeclared list '" +
                                  node.bind->list + "'");
        }
      }
    });
  }

  std::set<std::tuple<std::string, std::string, EventKind, std::string>> keys;
  for (const auto& t : def.transitions) {
    const std::string where = "transition " + t.from_screen + "/" + t.node_id + "/" +
                              std::string(to_string(t.event));
    const ScreenTemplate* screen = def.find_screen(t.from_screen);
    if (screen == nullptr) {
      throw DanglingReference(where + ": unknown from_screen '" + t.from_screen + "'");
    }
    const NodeTemplate* node = find_template(screen->root, t.node_id);
    if (node == nullptr) {
      throw DanglingReference(where + ": unknown node '" + t.node_id + "'");
    }
    if (t.event == EventKind::kType && !node->editable) {
      throw InvalidDefinition(where + ": type event on non-editable node");
    }
    if (t.event == EventKind::kTap && t.token_guard) {
      throw InvalidDefinition(where + ": token_guard is only valid for type events");
    }
    if (!keys.emplace(t.from_screen, t.node_id, t.event, t.token_guard.value_or("\x1f"))
             .second) {
      throw InvalidDefinition(where + ": more than one transition for the same key");
    }
    auto check_node_ref = [&](const std::string& id) {
      const NodeTemplate* ref = find_template(screen->root, id);
      if (ref == nullptr || !ref->editable) {
        throw DanglingReference(where + ": '" + id +
                                "' is not an editable node on the source screen");
      }
    };
    for (const auto& id : t.require_nonempty) check_node_ref(id);
    for (const auto& effect : t.effects) {
      switch (effect.kind) {
        case Effect::Kind::kGoto:
          if (def.find_screen(effect.target) == nullptr) {
            throw DanglingReference(where + ": goto unknown screen '" + effect.target + "'");
          }
          break;
        case Effect::Kind::kAppend:
        case Effect::Kind::kRemove:
          if (!def.store.lists.contains(effect.target)) {
            throw DanglingReference(where + ": unknown list '" + effect.target + "'");
          }
          break;
        case Effect::Kind::kSet:
          if (!def.store.vars.contains(effect.target)) {
            throw DanglingReference(where + ": unknown var '" + effect.target + "'");
          }
          break;
      }
      for (const auto& id : node_refs(effect.value)) check_node_ref(id);
    }
  }
}

std::string AppState::key() const {
  std::string out = screen_id;
  out += '\x1e';
  for (const auto& [name, value] : store.vars) {
    out += name;
    out += '=';
    out += value;
    out += '\x1f';
  }
  out += '\x1e';
  for (const auto& [name, entries] : store.lists) {
    out += name;
    out += ':';
    for (const auto& entry : entries) {
      out += entry;
      out += '\x1d';
    }
    out += '\x1f';
  }
  out += '\x1e';
  for (const auto& [node, value] : buffers) {
    if (value.empty()) continue;
    out += node;
    out += '=';
    out += value;
    out += '\x1f';
  }
  return out;
}

bool AppState::operator==(const AppState& other) const {
  return definition == other.definition && screen_id == other.screen_id &&
         store == other.store && buffers == other.buffers && rendered == other.rendered;
}

void render(AppState& state) {
  const ScreenTemplate* tmpl = state.definition->find_screen(state.screen_id);
  if (tmpl == nullptr) {
    throw DanglingReference("state refers to unknown screen '" + state.screen_id + "'");
  }
  state.rendered = vh::Screen{};
  state.rendered.screen_id = state.screen_id;
  state.origins.clear();
  render_node(tmpl->root, state, state.rendered.root, state.origins);
}

AppState initial_state(std::shared_ptr<const AppDefinition> definition) {
  AppState state;
  state.screen_id = definition->initial_screen;
  state.store = definition->store;
  state.definition = std::move(definition);
  render(state);
  return state;
}

AppState apply_event(const AppState& state, const UiEvent& event) {
  const vh::ViewNode* node = vh::find_node(state.rendered, event.node_id());
  if (node == nullptr) throw UnknownNode(event.node_id());

  AppState next = state;
  if (event.kind() == EventKind::kType) {
    if (!node->editable) return next;
    next.buffers[event.node_id()] = event.token().value_or("");
  }

  const NodeOrigin& origin = state.origins.at(event.node_id());
  const Transition* transition =
      find_transition(*state.definition, state.screen_id, origin.template_id,
                      event.kind(), event.token());
  bool guards_hold = transition != nullptr;
  if (transition != nullptr) {
    for (const auto& id : transition->require_nonempty) {
      const auto it = next.buffers.find(id);
      if (it == next.buffers.end() || it->second.empty()) guards_hold = false;
    }
  }

  if (guards_hold) {
    std::optional<std::string> goto_screen;
    const auto buffers = next.buffers;
    for (const auto& effect : transition->effects) {
      const ExpandContext ctx{&buffers, &next.store.vars, &origin.item};
      switch (effect.kind) {
        case Effect::Kind::kGoto:
          goto_screen = effect.target;
          break;
        case Effect::Kind::kAppend: {
          auto& list = next.store.lists[effect.target];
          std::string value = expand(effect.value, ctx);
          if (std::find(list.begin(), list.end(), value) == list.end()) {
            list.push_back(std::move(value));
          }
          break;
        }
        case Effect::Kind::kRemove: {
          auto& list = next.store.lists[effect.target];
          const std::string value = expand(effect.value, ctx);
          list.erase(std::remove(list.begin(), list.end(), value), list.end());
          break;
        }
        case Effect::Kind::kSet:
          next.store.vars[effect.target] = expand(effect.value, ctx);
          break;
      }
    }
    if (goto_screen) {
      next.screen_id = *goto_screen;
      next.buffers.clear();
    }
  }
  render(next);
  return next;
}

Predicate Predicate::screen_is(std::string screen_id) {
  Predicate p;
  p.kind = Kind::kScreenIs;
  p.arg = std::move(screen_id);
  return p;
}

Predicate Predicate::list_contains(std::string list, std::string value) {
  Predicate p;
  p.kind = Kind::kListContains;
  p.arg = std::move(list);
  p.value = std::move(value);
  return p;
}

Predicate Predicate::buffer_equals(std::string node_id, std::string value) {
  Predicate p;
  p.kind = Kind::kBufferEquals;
  p.arg = std::move(node_id);
  p.value = std::move(value);
  return p;
}

Predicate Predicate::text_on_screen(std::string text) {
  Predicate p;
  p.kind = Kind::kTextOnScreen;
  p.value = std::move(text);
  return p;
}

Predicate Predicate::at_least(int count, std::vector<Predicate> operands) {
  Predicate p;
  p.kind = Kind::kAtLeast;
  p.count = count;
  p.operands = std::move(operands);
  return p;
}

Predicate Predicate::all_of(std::vector<Predicate> operands) {
  Predicate p;
  p.kind = Kind::kAllOf;
  p.operands = std::move(operands);
  return p;
}

Predicate Predicate::any_of(std::vector<Predicate> operands) {
  Predicate p;
  p.kind = Kind::kAnyOf;
  p.operands = std::move(operands);
  return p;
}

bool Predicate::evaluate(const AppState& state) const {
  switch (kind) {
    case Kind::kScreenIs:
      return state.screen_id == arg;
    case Kind::kListContains: {
      const auto it = state.store.lists.find(arg);
      return it != state.store.lists.end() &&
             std::find(it->second.begin(), it->second.end(), value) != it->second.end();
    }
    case Kind::kBufferEquals: {
      const vh::ViewNode* node = vh::find_node(state.rendered, arg);
      return node != nullptr && node->editable && node->edit_buffer == value;
    }
    case Kind::kTextOnScreen:
      return vh::find_by_text(state.rendered, value).has_value();
    case Kind::kAtLeast: {
      int holding = 0;
      for (const auto& op : operands) holding += op.evaluate(state) ? 1 : 0;
      return holding >= count;
    }
    case Kind::kAllOf:
      return std::all_of(operands.begin(), operands.end(),
                         [&](const Predicate& op) { return op.evaluate(state); });
    case Kind::kAnyOf:
      return std::any_of(operands.begin(), operands.end(),
                         [&](const Predicate& op) { return op.evaluate(state); });
  }
  return false;
}

std::string Predicate::describe() const {
  auto join = [this](std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < operands.size(); ++i) {
      if (i > 0) out += sep;
      out += operands[i].describe();
    }
    return out;
  };
  switch (kind) {
    case Kind::kScreenIs:
      return "screen == " + arg;
    case Kind::kListContains:
      return arg + " contains '" + value + "'";
    case Kind::kBufferEquals:
      return arg + " buffer == '" + value + "'";
    case Kind::kTextOnScreen:
      return "'" + value + "' on screen";
    case Kind::kAtLeast:
      return "at least " + std::to_string(count) + " of (" + join(", ") + ")";
    case Kind::kAllOf:
      return "(" + join(" and ") + ")";
    case Kind::kAnyOf:
      return "(" + join(" or ") + ")";
  }
  return {};
}

double RewardSpec::max_total() const {
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

void RewardSpec::reset(bool sparse) {
  flags.assign(predicates.size(), true);
  if (sparse) {
    for (std::size_t i = 0; i + 1 < flags.size(); ++i) flags[i] = false;
  }
}

RewardOutcome reward_step(RewardSpec& spec, const AppState& state) {
  RewardOutcome outcome;
  const std::size_t goal = spec.predicates.size() - 1;
  for (std::size_t i = 0; i < spec.predicates.size(); ++i) {
    const bool holds = spec.predicates[i].evaluate(state);
    if (i == goal) outcome.done = holds;
    if (holds && spec.flags[i]) {
      outcome.reward += spec.rewards[i];
      spec.flags[i] = false;
      outcome.fired.push_back(static_cast<int>(i));
    }
  }
  return outcome;
}

RewardSpec TaskSpec::fresh_reward() const {
  RewardSpec spec = reward;
  spec.reset(sparse_variant);
  return spec;
}

AppState hard_reset(const TaskSpec& task) { return initial_state(task.app); }

namespace {

std::string rename_refs(const std::string& value,
                        const std::map<std::string, std::string>& ids) {
  std::string out = value;
  for (const auto& ref : node_refs(value)) {
    const auto it = ids.find(ref);
    if (it == ids.end()) continue;
    const std::string from = "${node:" + ref + "}";
    const std::string to = "${node:" + it->second + "}";
    for (auto pos = out.find(from); pos != std::string::npos;
         pos = out.find(from, pos + to.size())) {
      out.replace(pos, from.size(), to);
    }
  }
  return out;
}

void rewrite_node(NodeTemplate& node, const std::map<std::string, std::string>& text_map,
                  std::map<std::string, std::string>& ids, const std::string& prefix,
                  int& counter) {
  const std::string fresh = prefix + ".n" + std::to_string(counter++);
  ids[node.node_id] = fresh;
  node.node_id = fresh;
  if (!node.editable) {
    const auto it = text_map.find(node.text);
    if (it != text_map.end()) node.text = it->second;
  }
  for (auto& child : node.children) rewrite_node(child, text_map, ids, prefix, counter);
}

}  // namespace

AppDefinition clone_app_variant(const AppDefinition& def,
                                const std::map<std::string, std::string>& text_map,
                                const std::string& new_app_id) {
  AppDefinition clone = def;
  clone.app_id = new_app_id;
  std::map<std::string, std::map<std::string, std::string>> ids_by_screen;
  int counter = 0;
  for (auto& screen : clone.screens) {
    auto& ids = ids_by_screen[screen.screen_id];
    rewrite_node(screen.root, text_map, ids, new_app_id, counter);
  }
  for (auto& t : clone.transitions) {
    const auto& ids = ids_by_screen.at(t.from_screen);
    t.node_id = ids.at(t.node_id);
    for (auto& id : t.require_nonempty) id = ids.at(id);
    for (auto& effect : t.effects) effect.value = rename_refs(effect.value, ids);
  }
  return clone;
}

}  // namespace appgym::sim
