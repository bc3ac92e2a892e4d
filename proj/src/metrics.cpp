#include "pie/metrics.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"

namespace pie {

double f_beta_score(double precision, double recall, double beta) {
  double b2 = beta * beta;
  double denom = b2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

double word_accuracy(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.size() != gold.size())
    throw DataError("word_accuracy: " + std::to_string(pred.size()) + " predictions vs " +
                    std::to_string(gold.size()) + " references");
  if (pred.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<EditTriple> non_copy_triples(const EditSequence& e) {
  std::vector<EditTriple> out;
  for (size_t i = 0; i < e.ops.size(); ++i) {
    const EditOp& op = e.ops[i];
    if (op.kind == EditKind::Copy) continue;
    out.push_back({i, op.kind, op.arg, op.rule_id});
  }
  return out;
}

EvalReport edit_prf(const std::vector<std::vector<EditTriple>>& pred,
                    const std::vector<std::vector<EditTriple>>& gold, double beta) {
  if (pred.size() != gold.size())
    throw DataError("edit_prf: sentence count mismatch " + std::to_string(pred.size()) + " vs " +
                    std::to_string(gold.size()));
  EvalReport r;
  for (size_t s = 0; s < pred.size(); ++s) {
    std::map<EditTriple, uint64_t> gold_counts;
    for (const auto& t : gold[s]) ++gold_counts[t];
    r.gold_count += gold[s].size();
    r.proposed += pred[s].size();
    for (const auto& t : pred[s]) {
      auto it = gold_counts.find(t);
      if (it != gold_counts.end() && it->second > 0) {
        --it->second;
        ++r.true_positives;
      }
    }
  }
  r.precision = r.proposed > 0 ? static_cast<double>(r.true_positives) / r.proposed : 0.0;
  r.recall = r.gold_count > 0 ? static_cast<double>(r.true_positives) / r.gold_count : 0.0;
  r.f_beta = f_beta_score(r.precision, r.recall, beta);
  return r;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::json j{{"precision", r.precision},
                   {"recall", r.recall},
                   {"f05", r.f_beta},
                   {"counts",
                    {{"true_positives", r.true_positives},
                     {"proposed", r.proposed},
                     {"gold", r.gold_count}}}};
  if (r.word_accuracy >= 0.0) j["word_accuracy"] = r.word_accuracy;
  return j.dump();
}

size_t char_edit_distance(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace pie
