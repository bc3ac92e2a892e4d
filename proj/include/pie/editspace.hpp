#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pie/tokens.hpp"
#include "pie/transforms.hpp"

namespace pie {

enum class EditKind : uint8_t { Copy, Delete, Append, Replace, Transform };

char edit_kind_char(EditKind k);
EditKind edit_kind_from_char(char c);

struct EditOp {
  EditKind kind = EditKind::Copy;
  std::string arg;   // insert payload, Append/Replace only
  int rule_id = -1;  // Transform only

  static EditOp copy() { return {}; }
  static EditOp del() { return {EditKind::Delete, "", -1}; }
  static EditOp append(std::string w) { return {EditKind::Append, std::move(w), -1}; }
  static EditOp replace(std::string w) { return {EditKind::Replace, std::move(w), -1}; }
  static EditOp transform(int rule_id) { return {EditKind::Transform, "", rule_id}; }

  bool operator==(const EditOp&) const = default;
};

struct EditSequence {
  std::vector<EditOp> ops;

  size_t size() const { return ops.size(); }
  bool operator==(const EditSequence&) const = default;
};

enum class DiffKind : uint8_t { Copy, Delete, Insert };

// One post-processed diff entry. `pos` is the 0-based source index the op
// refers to; an Insert attaches after that source token.
struct DiffOp {
  DiffKind kind = DiffKind::Copy;
  size_t pos = 0;
  std::vector<Token> payload;  // Insert only

  bool operator==(const DiffOp&) const = default;
};

struct DiffConfig {
  double epsilon = 0.001;
  double insert_cost = 1.0;
  double delete_cost = 1.0;
  size_t max_tokens = 512;
};

struct DiffResult {
  std::vector<DiffOp> ops;
  double cost = 0.0;
};

// Levenshtein alignment with substitution cost 1 + epsilon*|chars(a)-chars(b)|
// (0 for equal tokens). Substitutions come back broken into Delete followed by
// Insert at the same anchor, and consecutive Inserts at one anchor are merged
// into a single payload. Backtrace tie-break: substitution, then delete, then
// insert.
DiffResult modified_levenshtein_diff(const TokenSequence& x, const TokenSequence& y,
                                     const DiffConfig& cfg = {});

struct InsertDictionary {
  struct Entry {
    std::string text;
    uint64_t count = 0;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;  // sorted by count desc, then text asc
  size_t q = 2;
  size_t capacity = 0;

  bool contains(const std::string& w) const;
  std::optional<size_t> index_of(const std::string& w) const;
  size_t size() const { return entries.size(); }
};

struct DictionaryBuildStats {
  size_t pairs = 0;
  size_t distinct_inserts = 0;
  size_t sentences_with_long_runs = 0;  // insert runs longer than q tokens
};

InsertDictionary build_insert_dictionary(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs, size_t M, size_t q,
    TokenMode mode, const DiffConfig& cfg = {}, DictionaryBuildStats* stats = nullptr,
    int threads = 1);

InsertDictionary load_insert_dictionary(const std::string& path, size_t q = 2);
void save_insert_dictionary(const InsertDictionary& dict, const std::string& path);
std::string insert_dictionary_digest(const InsertDictionary& dict);

// The Seq2Edits compiler: collapse a post-processed diff into one in-place
// edit per source position. Inserts upgrade the position's Copy to Append or
// its Delete to Transform/Replace; payloads outside the dictionary (and
// delete+insert pairs with no match) degrade to Copy.
EditSequence seq2edits(const TokenSequence& x, const TokenSequence& y,
                       const InsertDictionary& dict, const TransformTable& table,
                       TokenMode mode, const DiffConfig& cfg = {});

// Left-to-right emission of an edit sequence over its source. Boundary
// markers are always emitted; an Append on the start marker also emits its
// payload, every other non-copy edit on a marker degrades to Copy.
TokenSequence apply_edits(const TokenSequence& x, const EditSequence& e,
                          const TransformTable& table, TokenMode mode);

// JSON-lines serialization: {"edits":[{"pos":0,"op":"C"},...]}
std::string edit_sequence_to_json(const EditSequence& e);
EditSequence edit_sequence_from_json(const std::string& line);

}  // namespace pie
