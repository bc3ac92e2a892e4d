#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pie/common.hpp"

namespace pie {

enum class TransformFamily {
  AddSuffix,
  RemoveSuffix,
  ReplaceSuffix,
  CapitalizeFirst,
  LowerFirst,
};

const char* to_string(TransformFamily f);
TransformFamily transform_family_from_string(const std::string& s);

struct TransformRule {
  int id = 0;
  TransformFamily family = TransformFamily::AddSuffix;
  std::string suffix_from;  // empty for AddSuffix and case rules
  std::string suffix_to;    // empty for RemoveSuffix and case rules

  bool operator==(const TransformRule&) const = default;
};

using TransformTable = std::vector<TransformRule>;

// Deterministic application; nullopt when the rule does not apply to `word`
// (missing suffix, empty stem, or a case rule that would not change it).
std::optional<std::string> apply_transform(const TransformRule& rule, const std::string& word);

// First rule in table order mapping src exactly to dst, or nullopt.
std::optional<int> match_transformation(const std::string& src, const std::string& dst,
                                        const TransformTable& table);

const TransformRule& rule_by_id(const TransformTable& table, int id);

// The shipped table: 29 suffix transformations, their 29 inverses, then the
// two case rules. Rule ids are positions in this order.
TransformTable default_transform_table();

TransformTable load_transform_table(const std::string& path);
void save_transform_table(const TransformTable& table, const std::string& path);
std::string transform_table_digest(const TransformTable& table);

}  // namespace pie
