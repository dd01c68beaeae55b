#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace appgym::vh {

// One element of a view hierarchy. `text` is the accessibility description
// (content-desc); `edit_buffer` holds typed content and is only meaningful
// for editable nodes.
struct ViewNode {
  std::string node_id;
  std::string text;
  bool clickable = false;
  bool editable = false;
  std::string edit_buffer;
  std::vector<ViewNode> children;

  bool operator==(const ViewNode&) const = default;
};

struct Screen {
  std::string screen_id;
  ViewNode root;

  bool operator==(const Screen&) const = default;
};

struct IndexedNode {
  int preorder_index = 0;
  const ViewNode* node = nullptr;
};

// A clickable or editable element, ranked by its position in the actionable
// list of a screen.
struct ElementRef {
  int element_index = 0;
  std::string node_id;
  int preorder_index = 0;
  bool clickable = false;
  bool editable = false;
  std::string text;
  std::string edit_buffer;

  bool operator==(const ElementRef&) const = default;
};

// Depth-first pre-order: node before its children, children in stored order.
// The returned pointers borrow from `screen`.
std::vector<IndexedNode> preorder_index(const Screen& screen);

// Nodes with clickable || editable, ordered by pre-order index.
std::vector<ElementRef> actionable_elements(const Screen& screen);

// First actionable element (pre-order) whose text or edit buffer equals
// `text` exactly.
std::optional<ElementRef> find_by_text(const Screen& screen,
                                       std::string_view text);

const ViewNode* find_node(const Screen& screen, std::string_view node_id);

std::size_t node_count(const Screen& screen);

}  // namespace appgym::vh
