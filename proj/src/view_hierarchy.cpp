#include "appgym/view_hierarchy.hpp"

#include <utility>

namespace appgym::vh {

std::vector<IndexedNode> preorder_index(const Screen& screen) {
  std::vector<IndexedNode> order;
  std::vector<const ViewNode*> stack{&screen.root};
  while (!stack.empty()) {
    const ViewNode* node = stack.back();
    stack.pop_back();
    order.push_back({static_cast<int>(order.size()), node});
    for (auto it = node->children.rbegin(); it != node->children.rend(); ++it) {
      stack.push_back(&*it);
    }
  }
  return order;
}

std::vector<ElementRef> actionable_elements(const Screen& screen) {
  std::vector<ElementRef> elements;
  for (const auto& [index, node] : preorder_index(screen)) {
    if (!node->clickable && !node->editable) continue;
    ElementRef ref;
    ref.element_index = static_cast<int>(elements.size());
    ref.node_id = node->node_id;
    ref.preorder_index = index;
    ref.clickable = node->clickable;
    ref.editable = node->editable;
    ref.text = node->text;
    ref.edit_buffer = node->editable ? node->edit_buffer : std::string{};
    elements.push_back(std::move(ref));
  }
  return elements;
}

std::optional<ElementRef> find_by_text(const Screen& screen,
                                       std::string_view text) {
  for (auto& element : actionable_elements(screen)) {
    if (element.text == text || (element.editable && element.edit_buffer == text)) {
      return element;
    }
  }
  return std::nullopt;
}

const ViewNode* find_node(const Screen& screen, std::string_view node_id) {
  std::vector<const ViewNode*> stack{&screen.root};
  while (!stack.empty()) {
    const ViewNode* node = stack.back();
    stack.pop_back();
    if (node->node_id == node_id) return node;
    for (const auto& child : node->children) stack.push_back(&child);
  }
  return nullptr;
}

std::size_t node_count(const Screen& screen) {
  return preorder_index(screen).size();
}

}  // namespace appgym::vh
