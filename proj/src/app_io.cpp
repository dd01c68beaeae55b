#include "appgym/app_io.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace appgym::sim {

SchemaError::SchemaError(const std::string& message, int line, std::string field)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string{}) +
                         (field.empty() ? std::string{} : field + ": ") + message),
      line_(line),
      field_(std::move(field)) {}

namespace {

int line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.is_null() ? 0 : mark.line + 1;
}

[[noreturn]] void fail(const YAML::Node& node, const std::string& path,
                       const std::string& message) {
  throw SchemaError(message, line_of(node), path);
}

void expect_map(const YAML::Node& node, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) fail(node, path, "expected a mapping");
  for (const auto& entry : node) {
    const auto key = entry.first.as<std::string>();
    bool known = false;
    for (auto k : allowed) known = known || key == k;
    if (!known) fail(entry.first, path.empty() ? key : path + "." + key, "unknown field");
  }
}

YAML::Node required(const YAML::Node& parent, const std::string& path,
                    const std::string& key) {
  const YAML::Node node = parent[key];
  if (!node) fail(parent, path.empty() ? key : path + "." + key, "missing required field");
  return node;
}

std::string as_string(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) fail(node, path, "expected a string");
  return node.as<std::string>();
}

bool as_bool(const YAML::Node& node, const std::string& path) {
  bool value = false;
  if (!node.IsScalar() || !YAML::convert<bool>::decode(node, value)) {
    fail(node, path, "expected true or false");
  }
  return value;
}

std::vector<std::string> as_string_list(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence()) fail(node, path, "expected a list");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    out.push_back(as_string(node[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

NodeTemplate parse_node(const YAML::Node& node, const std::string& path) {
  expect_map(node, path,
             {"node_id", "text", "clickable", "editable", "bind", "children"});
  NodeTemplate out;
  out.node_id = as_string(required(node, path, "node_id"), path + ".node_id");
  if (node["text"]) out.text = as_string(node["text"], path + ".text");
  if (node["clickable"]) out.clickable = as_bool(node["clickable"], path + ".clickable");
  if (node["editable"]) out.editable = as_bool(node["editable"], path + ".editable");
  if (const auto bind = node["bind"]) {
    const std::string bpath = path + ".bind";
    expect_map(bind, bpath, {"list", "filter_prefix", "item_clickable"});
    BindSpec spec;
    spec.list = as_string(required(bind, bpath, "list"), bpath + ".list");
    if (bind["filter_prefix"]) {
      spec.filter_prefix = as_string(bind["filter_prefix"], bpath + ".filter_prefix");
    }
    if (bind["item_clickable"]) {
      spec.item_clickable = as_bool(bind["item_clickable"], bpath + ".item_clickable");
    }
    out.bind = spec;
  }
  if (const auto children = node["children"]) {
    if (!children.IsSequence()) fail(children, path + ".children", "expected a list");
    for (std::size_t i = 0; i < children.size(); ++i) {
      out.children.push_back(
          parse_node(children[i], path + ".children[" + std::to_string(i) + "]"));
    }
  }
  return out;
}

Effect parse_effect(const YAML::Node& node, const std::string& path) {
  expect_map(node, path, {"goto", "append", "remove", "set", "value"});
  Effect effect;
  int kinds = 0;
  auto take = [&](const char* key, Effect::Kind kind) {
    if (!node[key]) return;
    ++kinds;
    effect.kind = kind;
    effect.target = as_string(node[key], path + "." + key);
  };
  take("goto", Effect::Kind::kGoto);
  take("append", Effect::Kind::kAppend);
  take("remove", Effect::Kind::kRemove);
  take("set", Effect::Kind::kSet);
  if (kinds != 1) fail(node, path, "effect needs exactly one of goto/append/remove/set");
  if (effect.kind == Effect::Kind::kGoto) {
    if (node["value"]) fail(node["value"], path + ".value", "goto takes no value");
  } else {
    effect.value = as_string(required(node, path, "value"), path + ".value");
  }
  return effect;
}

Transition parse_transition(const YAML::Node& node, const std::string& path) {
  expect_map(node, path,
             {"from_screen", "node_id", "event", "token_guard", "require_nonempty",
              "effects"});
  Transition t;
  t.from_screen = as_string(required(node, path, "from_screen"), path + ".from_screen");
  t.node_id = as_string(required(node, path, "node_id"), path + ".node_id");
  const auto event = required(node, path, "event");
  const std::string event_name = as_string(event, path + ".event");
  if (event_name != "tap" && event_name != "type") {
    fail(event, path + ".event", "expected 'tap' or 'type'");
  }
  t.event = event_kind_from_string(event_name);
  if (node["token_guard"]) t.token_guard = as_string(node["token_guard"], path + ".token_guard");
  if (node["require_nonempty"]) {
    t.require_nonempty = as_string_list(node["require_nonempty"], path + ".require_nonempty");
  }
  const auto effects = required(node, path, "effects");
  if (!effects.IsSequence()) fail(effects, path + ".effects", "expected a list");
  for (std::size_t i = 0; i < effects.size(); ++i) {
    t.effects.push_back(parse_effect(effects[i], path + ".effects[" + std::to_string(i) + "]"));
  }
  return t;
}

Store parse_store(const YAML::Node& node, const std::string& path) {
  expect_map(node, path, {"vars", "lists"});
  Store store;
  if (const auto vars = node["vars"]) {
    if (!vars.IsMap()) fail(vars, path + ".vars", "expected a mapping");
    for (const auto& entry : vars) {
      const auto name = entry.first.as<std::string>();
      store.vars[name] = as_string(entry.second, path + ".vars." + name);
    }
  }
  if (const auto lists = node["lists"]) {
    if (!lists.IsMap()) fail(lists, path + ".lists", "expected a mapping");
    for (const auto& entry : lists) {
      const auto name = entry.first.as<std::string>();
      store.lists[name] = as_string_list(entry.second, path + ".lists." + name);
    }
  }
  return store;
}

void emit_node(YAML::Emitter& out, const NodeTemplate& node) {
  out << YAML::BeginMap;
  out << YAML::Key << "node_id" << YAML::Value << node.node_id;
  if (!node.text.empty()) out << YAML::Key << "text" << YAML::Value << node.text;
  if (node.clickable) out << YAML::Key << "clickable" << YAML::Value << true;
  if (node.editable) out << YAML::Key << "editable" << YAML::Value << true;
  if (node.bind) {
    out << YAML::Key << "bind" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "list" << YAML::Value << node.bind->list;
    if (!node.bind->filter_prefix.empty()) {
      out << YAML::Key << "filter_prefix" << YAML::Value << node.bind->filter_prefix;
    }
    out << YAML::Key << "item_clickable" << YAML::Value << node.bind->item_clickable;
    out << YAML::EndMap;
  }
  if (!node.children.empty()) {
    out << YAML::Key << "children" << YAML::Value << YAML::BeginSeq;
    for (const auto& child : node.children) emit_node(out, child);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
}

const char* effect_key(Effect::Kind kind) {
  switch (kind) {
    case Effect::Kind::kGoto:
      return "goto";
    case Effect::Kind::kAppend:
      return "append";
    case Effect::Kind::kRemove:
      return "remove";
    case Effect::Kind::kSet:
      return "set";
  }
  return "goto";
}

}  // namespace

AppDefinition parse_app_definition(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw SchemaError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1, "");
  }
  expect_map(root, "", {"app_id", "initial_screen", "store", "screens", "transitions"});

  AppDefinition def;
  def.app_id = as_string(required(root, "", "app_id"), "app_id");
  def.initial_screen = as_string(required(root, "", "initial_screen"), "initial_screen");
  if (root["store"]) def.store = parse_store(root["store"], "store");

  const auto screens = required(root, "", "screens");
  if (!screens.IsSequence()) fail(screens, "screens", "expected a list");
  for (std::size_t i = 0; i < screens.size(); ++i) {
    const std::string path = "screens[" + std::to_string(i) + "]";
    expect_map(screens[i], path, {"screen_id", "root"});
    ScreenTemplate screen;
    screen.screen_id = as_string(required(screens[i], path, "screen_id"), path + ".screen_id");
    screen.root = parse_node(required(screens[i], path, "root"), path + ".root");
    def.screens.push_back(std::move(screen));
  }
  if (const auto transitions = root["transitions"]) {
    if (!transitions.IsSequence()) fail(transitions, "transitions", "expected a list");
    for (std::size_t i = 0; i < transitions.size(); ++i) {
      def.transitions.push_back(
          parse_transition(transitions[i], "transitions[" + std::to_string(i) + "]"));
    }
  }
  validate(def);
  return def;
}

std::string emit_app_definition(const AppDefinition& def) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "app_id" << YAML::Value << def.app_id;
  out << YAML::Key << "initial_screen" << YAML::Value << def.initial_screen;

  out << YAML::Key << "store" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "vars" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, value] : def.store.vars) {
    out << YAML::Key << name << YAML::Value << YAML::DoubleQuoted << value;
  }
  out << YAML::EndMap;
  out << YAML::Key << "lists" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, entries] : def.store.lists) {
    out << YAML::Key << name << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& entry : entries) out << YAML::DoubleQuoted << entry;
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  out << YAML::EndMap;

  out << YAML::Key << "screens" << YAML::Value << YAML::BeginSeq;
  for (const auto& screen : def.screens) {
    out << YAML::BeginMap;
    out << YAML::Key << "screen_id" << YAML::Value << screen.screen_id;
    out << YAML::Key << "root" << YAML::Value;
    emit_node(out, screen.root);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "transitions" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : def.transitions) {
    out << YAML::BeginMap;
    out << YAML::Key << "from_screen" << YAML::Value << t.from_screen;
    out << YAML::Key << "node_id" << YAML::Value << t.node_id;
    out << YAML::Key << "event" << YAML::Value << std::string(to_string(t.event));
    if (t.token_guard) {
      out << YAML::Key << "token_guard" << YAML::Value << YAML::DoubleQuoted << *t.token_guard;
    }
    if (!t.require_nonempty.empty()) {
      out << YAML::Key << "require_nonempty" << YAML::Value << YAML::Flow << t.require_nonempty;
    }
    out << YAML::Key << "effects" << YAML::Value << YAML::BeginSeq;
    for (const auto& effect : t.effects) {
      out << YAML::Flow << YAML::BeginMap;
      out << YAML::Key << effect_key(effect.kind) << YAML::Value << effect.target;
      if (effect.kind != Effect::Kind::kGoto) {
        out << YAML::Key << "value" << YAML::Value << YAML::DoubleQuoted << effect.value;
      }
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

AppDefinition load_app_definition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open app definition: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_app_definition(buffer.str());
}

void save_app_definition(const AppDefinition& def, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write app definition: " + path.string());
  out << emit_app_definition(def);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace appgym::sim
