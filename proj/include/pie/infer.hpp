#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "pie/model.hpp"

namespace pie {

struct InferenceConfig {
  int max_iterations = 4;  // I
  int batch_size = 1;
  bool record_rounds = false;

  void validate() const {
    if (max_iterations < 1) throw DataError("max_iterations must be >= 1");
  }
};

struct RefinementRound {
  TokenSequence output;
  EditSequence edits;
  bool changed = false;
};

struct RefinementTrace {
  std::vector<RefinementRound> rounds;
  int rounds_used = 0;
};

// One parallel pass: per-position argmax over the edit distribution.
template <class T>
EditSequence predict_edits(PieModel<T>& model, const TokenSequence& x) {
  Tape<T> tape;
  auto enc = model.encode(tape, {model.vocab().ids(x)});
  auto logits = model.logits(tape, enc);
  auto dist = edit_distribution(tape.value(logits));
  EditSequence e;
  e.ops.reserve(dist.argmax.size());
  for (int label : dist.argmax) e.ops.push_back(model.labels().op_of(label));
  return e;
}

// Optional hook: average the edit distributions of several checkpoints
// before the argmax. Not part of the acceptance path.
template <class T>
EditSequence predict_edits_ensemble(const std::vector<PieModel<T>*>& models,
                                    const TokenSequence& x) {
  if (models.empty()) throw ProgrammingError("ensemble requires at least one model");
  Tensor<double> mean;
  for (PieModel<T>* m : models) {
    Tape<T> tape;
    auto enc = m->encode(tape, {m->vocab().ids(x)});
    auto dist = edit_distribution(tape.value(m->logits(tape, enc)));
    Tensor<double> p = dist.probs.template cast<double>();
    if (mean.numel() == 0)
      mean = std::move(p);
    else {
      if (!mean.same_shape(p)) throw DataError("ensemble members disagree on the edit space");
      for (int64_t i = 0; i < mean.numel(); ++i) mean.v[i] += p.v[i];
    }
  }
  EditSequence e;
  const EditLabelSpace& labels = models[0]->labels();
  for (int64_t i = 0; i < mean.rows(); ++i) {
    int best = 0;
    double mx = mean.at(i, 0);
    for (int64_t j = 1; j < mean.cols(); ++j)
      if (mean.at(i, j) > mx) {
        mx = mean.at(i, j);
        best = static_cast<int>(j);
      }
    e.ops.push_back(labels.op_of(best));
  }
  return e;
}

using PredictFn = std::function<EditSequence(const TokenSequence&)>;

struct RefineContext {
  const TransformTable& table;
  TokenMode mode;
};

// Re-decode the model's own applied output until it reproduces the current
// input (fixed point) or any output of an earlier round (cycle), up to I
// rounds. Returns the last produced sequence.
std::pair<TokenSequence, RefinementTrace> refine_iteratively(const PredictFn& predict,
                                                             const RefineContext& ctx,
                                                             const TokenSequence& x,
                                                             const InferenceConfig& cfg);

template <class T>
std::pair<TokenSequence, RefinementTrace> refine_iteratively(PieModel<T>& model,
                                                             const TokenSequence& x,
                                                             const InferenceConfig& cfg) {
  RefineContext ctx{model.transforms(), model.mode()};
  return refine_iteratively([&model](const TokenSequence& s) { return predict_edits(model, s); },
                            ctx, x, cfg);
}

struct BenchBucketReport {
  double bucket_mean_length = 0.0;
  double mean_ms = 0.0;
  double mean_rounds = 0.0;
  double mean_passes = 0.0;
  double baseline_mean_ms = 0.0;
  // not serialized: the simulated-sequential baseline runs the encoder once
  // per output token, so its pass count is the sentence length by construction
  double baseline_mean_passes = 0.0;
};

// CSV schema: bucket_mean_length,mean_ms,mean_rounds,mean_passes,baseline_mean_ms
void write_bench_csv(const std::vector<BenchBucketReport>& report, const std::string& path);

template <class T>
std::vector<BenchBucketReport> decode_latency_bench(PieModel<T>& model,
                                                    const std::vector<TokenSequence>& corpus,
                                                    const std::vector<int>& bucket_bounds,
                                                    const InferenceConfig& cfg) {
  if (bucket_bounds.empty()) throw DataError("bench requires at least one length bucket");
  std::vector<std::vector<const TokenSequence*>> buckets(bucket_bounds.size());
  for (const TokenSequence& s : corpus) {
    size_t b = 0;
    while (b + 1 < bucket_bounds.size() &&
           static_cast<int>(s.tokens.size()) > bucket_bounds[b])
      ++b;
    buckets[b].push_back(&s);
  }
  std::vector<BenchBucketReport> out;
  for (size_t b = 0; b < buckets.size(); ++b) {
    BenchBucketReport rep;
    if (buckets[b].empty()) continue;
    double len_sum = 0, ms_sum = 0, rounds_sum = 0, passes_sum = 0, base_ms_sum = 0,
           base_passes_sum = 0;
    for (const TokenSequence* s : buckets[b]) {
      len_sum += static_cast<double>(s->tokens.size());
      uint64_t before = model.forward_passes();
      auto t0 = std::chrono::steady_clock::now();
      auto [final_seq, trace] = refine_iteratively(model, *s, cfg);
      ms_sum += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
      rounds_sum += trace.rounds_used;
      passes_sum += static_cast<double>(model.forward_passes() - before);
      // simulated-sequential baseline: one encoder pass per output token
      auto ids = model.vocab().ids(*s);
      auto t1 = std::chrono::steady_clock::now();
      for (size_t step = 0; step < s->tokens.size(); ++step) {
        Tape<T> tape;
        auto enc = model.encode(tape, {ids});
        model.logits(tape, enc);
      }
      base_ms_sum +=
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();
      base_passes_sum += static_cast<double>(s->tokens.size());
    }
    double count = static_cast<double>(buckets[b].size());
    rep.bucket_mean_length = len_sum / count;
    rep.mean_ms = ms_sum / count;
    rep.mean_rounds = rounds_sum / count;
    rep.mean_passes = passes_sum / count;
    rep.baseline_mean_ms = base_ms_sum / count;
    rep.baseline_mean_passes = base_passes_sum / count;
    out.push_back(rep);
  }
  return out;
}

}  // namespace pie
