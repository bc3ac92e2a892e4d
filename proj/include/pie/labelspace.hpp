#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pie/editspace.hpp"

namespace pie {

// Stable indexing of the edit space E: copy, delete, one label per transform
// rule, one per append argument, one per replace argument. Σ_a order follows
// the insert dictionary.
class EditLabelSpace {
 public:
  EditLabelSpace(const InsertDictionary& dict, const TransformTable& table);

  int size() const { return 2 + transform_count_ + 2 * insert_count(); }
  int copy_label() const { return 0; }
  int delete_label() const { return 1; }
  int transform_begin() const { return 2; }
  int append_begin() const { return 2 + transform_count_; }
  int replace_begin() const { return append_begin() + insert_count(); }
  int transform_count() const { return transform_count_; }
  int insert_count() const { return static_cast<int>(inserts_.size()); }
  const std::vector<std::string>& inserts() const { return inserts_; }

  // Throws DataError when the op is not representable (payload outside Σ_a or
  // unknown transform rule): a compile/model vocabulary mismatch.
  int label_of(const EditOp& op) const;
  EditOp op_of(int label) const;

 private:
  std::vector<std::string> inserts_;
  std::unordered_map<std::string, int> insert_index_;
  std::vector<int> rule_ids_;                 // label offset -> rule id
  std::unordered_map<int, int> rule_offset_;  // rule id -> label offset
  int transform_count_ = 0;
};

}  // namespace pie
