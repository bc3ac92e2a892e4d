#include "pie/labelspace.hpp"

namespace pie {

EditLabelSpace::EditLabelSpace(const InsertDictionary& dict, const TransformTable& table) {
  inserts_.reserve(dict.entries.size());
  for (const auto& e : dict.entries) {
    insert_index_.emplace(e.text, static_cast<int>(inserts_.size()));
    inserts_.push_back(e.text);
  }
  rule_ids_.reserve(table.size());
  for (const auto& r : table) {
    rule_offset_.emplace(r.id, static_cast<int>(rule_ids_.size()));
    rule_ids_.push_back(r.id);
  }
  transform_count_ = static_cast<int>(rule_ids_.size());
}

int EditLabelSpace::label_of(const EditOp& op) const {
  switch (op.kind) {
    case EditKind::Copy: return copy_label();
    case EditKind::Delete: return delete_label();
    case EditKind::Transform: {
      auto it = rule_offset_.find(op.rule_id);
      if (it == rule_offset_.end())
        throw DataError("edit uses transform rule " + std::to_string(op.rule_id) +
                        " absent from the model's table (vocabulary mismatch)");
      return transform_begin() + it->second;
    }
    case EditKind::Append:
    case EditKind::Replace: {
      auto it = insert_index_.find(op.arg);
      if (it == insert_index_.end())
        throw DataError("edit argument '" + op.arg +
                        "' absent from the model's insert dictionary (vocabulary mismatch)");
      return (op.kind == EditKind::Append ? append_begin() : replace_begin()) + it->second;
    }
  }
  throw ProgrammingError("unhandled edit kind");
}

EditOp EditLabelSpace::op_of(int label) const {
  if (label == copy_label()) return EditOp::copy();
  if (label == delete_label()) return EditOp::del();
  if (label >= transform_begin() && label < append_begin())
    return EditOp::transform(rule_ids_[static_cast<size_t>(label - transform_begin())]);
  if (label >= append_begin() && label < replace_begin())
    return EditOp::append(inserts_[static_cast<size_t>(label - append_begin())]);
  if (label >= replace_begin() && label < size())
    return EditOp::replace(inserts_[static_cast<size_t>(label - replace_begin())]);
  throw ProgrammingError("edit label " + std::to_string(label) + " out of range");
}

}  // namespace pie
