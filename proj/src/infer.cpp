#include "pie/infer.hpp"

#include <fstream>
#include <set>

namespace pie {

std::pair<TokenSequence, RefinementTrace> refine_iteratively(const PredictFn& predict,
                                                             const RefineContext& ctx,
                                                             const TokenSequence& x,
                                                             const InferenceConfig& cfg) {
  cfg.validate();
  RefinementTrace trace;
  TokenSequence current = x;
  std::set<std::vector<Token>> seen_outputs;
  TokenSequence last = x;
  for (int round = 1; round <= cfg.max_iterations; ++round) {
    EditSequence e = predict(current);
    TokenSequence next = apply_edits(current, e, ctx.table, ctx.mode);
    trace.rounds_used = round;
    RefinementRound rec;
    rec.edits = std::move(e);
    rec.output = next;
    rec.changed = next.tokens != current.tokens;
    trace.rounds.push_back(std::move(rec));
    last = next;
    if (next.tokens == current.tokens) break;            // fixed point
    if (seen_outputs.count(next.tokens)) break;          // cycle
    seen_outputs.insert(next.tokens);
    current = std::move(next);
  }
  return {last, std::move(trace)};
}

void write_bench_csv(const std::vector<BenchBucketReport>& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write bench csv: " + path);
  out << "bucket_mean_length,mean_ms,mean_rounds,mean_passes,baseline_mean_ms\n";
  for (const auto& r : report)
    out << r.bucket_mean_length << ',' << r.mean_ms << ',' << r.mean_rounds << ','
        << r.mean_passes << ',' << r.baseline_mean_ms << '\n';
}

}  // namespace pie
