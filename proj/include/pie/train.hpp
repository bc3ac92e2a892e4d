#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pie/checkpoint.hpp"
#include "pie/model.hpp"

namespace pie {

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 2e-5;
  int epochs = 2;
  double copy_weight = 0.4;
  uint64_t seed = 42;
  HeadMode head_mode = HeadMode::Factorized;
  int64_t warmup_steps = 0;
  int threads = 1;  // >1 splits each batch into chunks with deterministic merge

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double label_accuracy = 0.0;
  double seconds = 0.0;
};

std::string epoch_metrics_json(const EpochMetrics& m);

// Copy-weighted cross-entropy. The node's value is
// noncopy_sum + copy_weight * copy_sum, with the two partial sums accumulated
// separately (in row order) so the loss decomposition identity is exact.
template <class T>
struct LossParts {
  typename Tape<T>::NodeId node = -1;
  T copy_sum = 0;
  T noncopy_sum = 0;
  int64_t positions = 0;
};

template <class T>
LossParts<T> edit_label_loss(Tape<T>& tape, typename Tape<T>::NodeId logits,
                             const std::vector<int>& gold, int copy_label, T copy_weight) {
  const Tensor<T>& L = tape.value(logits);
  if (static_cast<int64_t>(gold.size()) != L.rows())
    throw ProgrammingError("loss: " + std::to_string(gold.size()) + " labels for " +
                           std::to_string(L.rows()) + " logit rows");
  const int64_t E = L.cols();
  auto probs = std::make_shared<Tensor<T>>(L.shape);
  auto golds = std::make_shared<std::vector<int>>(gold);
  LossParts<T> parts;
  for (int64_t i = 0; i < L.rows(); ++i) {
    int g = gold[static_cast<size_t>(i)];
    if (g < 0) continue;  // padding sentinel: contributes nothing
    if (g >= E)
      throw DataError("gold label " + std::to_string(g) + " outside edit space of size " +
                      std::to_string(E));
    T mx = L.at(i, 0);
    for (int64_t j = 1; j < E; ++j) mx = std::max(mx, L.at(i, j));
    T sum = 0;
    for (int64_t j = 0; j < E; ++j) {
      T e = std::exp(L.at(i, j) - mx);
      probs->at(i, j) = e;
      sum += e;
    }
    T inv = T(1) / sum;
    for (int64_t j = 0; j < E; ++j) probs->at(i, j) *= inv;
    T ce = std::log(sum) + mx - L.at(i, g);
    if (g == copy_label)
      parts.copy_sum += ce;
    else
      parts.noncopy_sum += ce;
    ++parts.positions;
  }
  T total = parts.noncopy_sum + copy_weight * parts.copy_sum;
  parts.node = tape.custom(
      {logits}, Tensor<T>::scalar(total),
      [logits, probs, golds, copy_label, copy_weight](Tape<T>& t, typename Tape<T>::NodeId self) {
        if (!t.needs_grad(logits)) return;
        T up = t.grad(self).v[0];
        Tensor<T>& gl = t.grad(logits);
        int64_t E = gl.cols();
        for (int64_t i = 0; i < gl.rows(); ++i) {
          int g = (*golds)[static_cast<size_t>(i)];
          if (g < 0) continue;
          T w = (g == copy_label ? copy_weight : T(1)) * up;
          for (int64_t j = 0; j < E; ++j) gl.at(i, j) += w * probs->at(i, j);
          gl.at(i, g) -= w;
        }
      });
  return parts;
}

// One training pair, already compiled to ids/labels.
struct TrainExample {
  std::vector<int32_t> ids;
  std::vector<int> labels;
};

template <class T>
class Trainer {
 public:
  Trainer(PieModel<T>& model, TrainConfig cfg);

  // Compile (x, e) pairs against the model's vocabulary and label space.
  // Sequences longer than max_positions are skipped with a count.
  std::vector<TrainExample> compile(
      const std::vector<std::pair<TokenSequence, EditSequence>>& corpus, size_t* skipped = nullptr);

  // Runs the epoch loop; writes epoch_NNN.ckpt plus model.ckpt and
  // train_log.jsonl under out_dir when non-empty. Throws NumericError on
  // divergence (the last finished epoch's checkpoint remains on disk).
  std::vector<EpochMetrics> train(const std::vector<TrainExample>& examples,
                                  const std::string& out_dir,
                                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

  Adam<T>& optimizer() { return opt_; }

 private:
  struct BatchStats {
    double loss_sum = 0.0;
    int64_t positions = 0;
    int64_t correct = 0;
  };
  BatchStats run_batch(const std::vector<const TrainExample*>& batch, int epoch, int64_t batch_idx);

  PieModel<T>& model_;
  TrainConfig cfg_;
  Adam<T> opt_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace pie
