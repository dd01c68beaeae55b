#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "appgym/app_sim.hpp"

namespace appgym::sim {

// Malformed app-definition text. `line` is 1-based, 0 when unknown; `field`
// is a dotted path such as `screens[2].root.children[0].clickable`.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& message, int line, std::string field);

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

// Parses and validates. Throws SchemaError, DanglingReference or
// InvalidDefinition.
AppDefinition parse_app_definition(const std::string& text);
std::string emit_app_definition(const AppDefinition& def);

AppDefinition load_app_definition(const std::filesystem::path& path);
void save_app_definition(const AppDefinition& def, const std::filesystem::path& path);

}  // namespace appgym::sim
