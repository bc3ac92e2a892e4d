#pragma once

#include <string>
#include <vector>

#include "pie/editspace.hpp"

namespace pie {

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_beta = 0.0;  // beta = 0.5 unless stated otherwise
  double word_accuracy = -1.0;  // negative = not computed
  uint64_t true_positives = 0;
  uint64_t proposed = 0;
  uint64_t gold_count = 0;
};

// (1+b²)PR / (b²P + R), 0 when the denominator is 0.
double f_beta_score(double precision, double recall, double beta);

// Fraction of predictions exactly equal to their reference.
double word_accuracy(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// A non-copy edit pinned to its source position, comparable across pred/gold.
struct EditTriple {
  size_t pos = 0;
  EditKind kind = EditKind::Delete;
  std::string arg;
  int rule_id = -1;

  auto operator<=>(const EditTriple&) const = default;
};

std::vector<EditTriple> non_copy_triples(const EditSequence& e);

// Span-free edit-level P/R/F: true positives are the multiset intersection of
// non-copy edits per sentence.
EvalReport edit_prf(const std::vector<std::vector<EditTriple>>& pred,
                    const std::vector<std::vector<EditTriple>>& gold, double beta = 0.5);

std::string eval_report_json(const EvalReport& r);

// Plain character-level Levenshtein distance (unit costs); used by the
// lossy-drop bound checks and available to evaluation tooling.
size_t char_edit_distance(const std::string& a, const std::string& b);

}  // namespace pie
