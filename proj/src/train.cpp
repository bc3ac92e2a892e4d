#include "pie/train.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace pie {

void TrainConfig::validate() const {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (copy_weight <= 0.0 || copy_weight > 1.0) throw DataError("copy_weight must be in (0,1]");
  if (epochs < 0) throw DataError("epochs must be >= 0");
  if (threads < 1) throw DataError("threads must be >= 1");
}

std::string epoch_metrics_json(const EpochMetrics& m) {
  nlohmann::json j{{"epoch", m.epoch},
                   {"loss", m.loss},
                   {"label_accuracy", m.label_accuracy},
                   {"seconds", m.seconds}};
  return j.dump();
}

template <class T>
Trainer<T>::Trainer(PieModel<T>& model, TrainConfig cfg) : model_(model), cfg_(cfg) {
  cfg_.validate();
  AdamConfig ac;
  ac.learning_rate = cfg_.learning_rate;
  ac.warmup_steps = cfg_.warmup_steps;
  opt_ = Adam<T>(ac);
}

template <class T>
std::vector<TrainExample> Trainer<T>::compile(
    const std::vector<std::pair<TokenSequence, EditSequence>>& corpus, size_t* skipped) {
  std::vector<TrainExample> out;
  size_t dropped = 0;
  for (const auto& [x, e] : corpus) {
    if (x.tokens.size() != e.ops.size())
      throw DataError("edit sequence length " + std::to_string(e.ops.size()) +
                      " does not match source length " + std::to_string(x.tokens.size()));
    if (static_cast<int>(x.tokens.size()) > model_.config().max_positions) {
      ++dropped;
      continue;
    }
    TrainExample ex;
    ex.ids = model_.vocab().ids(x);
    ex.labels.reserve(e.ops.size());
    for (const EditOp& op : e.ops) ex.labels.push_back(model_.labels().label_of(op));
    out.push_back(std::move(ex));
  }
  if (skipped) *skipped = dropped;
  return out;
}

template <class T>
typename Trainer<T>::BatchStats Trainer<T>::run_batch(
    const std::vector<const TrainExample*>& batch, int epoch, int64_t batch_idx) {
  int64_t total_positions = 0;
  for (auto* ex : batch) total_positions += static_cast<int64_t>(ex->labels.size());
  const T inv_positions = T(1) / static_cast<T>(total_positions);
  const int copy_label = model_.labels().copy_label();
  const T copy_weight = static_cast<T>(cfg_.copy_weight);

  int chunks = std::min<int>(cfg_.threads, static_cast<int>(batch.size()));
  struct ChunkResult {
    double loss_sum = 0.0;
    int64_t correct = 0;
    std::vector<std::pair<Parameter<T>*, Tensor<T>>> grads;
    std::string error;
  };
  std::vector<ChunkResult> results(static_cast<size_t>(chunks));

  auto run_chunk = [&](int c, bool into_params) {
    ChunkResult& res = results[static_cast<size_t>(c)];
    size_t begin = (batch.size() * static_cast<size_t>(c)) / static_cast<size_t>(chunks);
    size_t end = (batch.size() * static_cast<size_t>(c + 1)) / static_cast<size_t>(chunks);
    if (begin == end) return;
    std::vector<std::vector<int32_t>> ids;
    std::vector<int> gold;
    for (size_t i = begin; i < end; ++i) {
      ids.push_back(batch[i]->ids);
      for (int l : batch[i]->labels) gold.push_back(l);
    }
    Rng dropout_rng = Rng::derive(cfg_.seed ^ 0xd70907u,
                                  (static_cast<uint64_t>(epoch) << 40) ^
                                      (static_cast<uint64_t>(batch_idx) << 8) ^
                                      static_cast<uint64_t>(c));
    Tape<T> tape;
    typename PieModel<T>::EncodeOptions opt;
    opt.train = true;
    opt.dropout_rng = &dropout_rng;
    auto enc = model_.encode(tape, ids, opt);
    auto logits = model_.logits(tape, enc);
    auto loss = edit_label_loss(tape, logits, gold, copy_label, copy_weight);
    auto scaled = tape.mul_scalar(loss.node, inv_positions);
    res.loss_sum = static_cast<double>(tape.value(loss.node).v[0]);
    const auto dist = edit_distribution(tape.value(logits));
    for (size_t i = 0; i < gold.size(); ++i)
      if (dist.argmax[i] == gold[i]) ++res.correct;
    tape.backward(scaled, into_params);
    if (!into_params) res.grads = tape.collect_param_grads();
  };

  if (chunks == 1) {
    run_chunk(0, true);
  } else {
    std::vector<std::thread> workers;
    for (int c = 0; c < chunks; ++c)
      workers.emplace_back([&, c] {
        try {
          run_chunk(c, false);
        } catch (const std::exception& ex) {
          results[static_cast<size_t>(c)].error = ex.what();
        }
      });
    for (auto& w : workers) w.join();
    for (auto& res : results)
      if (!res.error.empty()) throw NumericError("training worker failed: " + res.error);
    // merge in chunk order so the result is deterministic for a fixed thread count
    for (auto& res : results)
      for (auto& [param, grad] : res.grads)
        for (int64_t i = 0; i < grad.numel(); ++i) param->grad.v[i] += grad.v[i];
  }

  BatchStats stats;
  stats.positions = total_positions;
  for (auto& res : results) {
    stats.loss_sum += res.loss_sum;
    stats.correct += res.correct;
  }
  return stats;
}

template <class T>
std::vector<EpochMetrics> Trainer<T>::train(
    const std::vector<TrainExample>& examples, const std::string& out_dir,
    const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (examples.empty()) throw DataError("training corpus is empty");
  namespace fs = std::filesystem;
  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(fs::path(out_dir) / "train_log.jsonl");
  }
  auto params = model_.parameters();
  std::vector<EpochMetrics> history;

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng::derive(cfg_.seed, static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    // bucket by length (width 8) without disturbing the shuffled order inside
    // a bucket, so batches pad only to their bucket
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return examples[a].ids.size() / 8 < examples[b].ids.size() / 8;
    });

    double loss_sum = 0.0;
    int64_t positions = 0, correct = 0;
    int64_t batch_idx = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg_.batch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg_.batch_size));
      std::vector<const TrainExample*> batch;
      for (size_t i = begin; i < end; ++i) batch.push_back(&examples[order[i]]);
      BatchStats stats = run_batch(batch, epoch, batch_idx++);
      if (!std::isfinite(stats.loss_sum))
        throw NumericError("training diverged: non-finite loss in epoch " +
                           std::to_string(epoch) + " (last finished epoch's checkpoint retained)");
      opt_.step(params);
      for (auto* p : params) p->zero_grad();
      loss_sum += stats.loss_sum;
      positions += stats.positions;
      correct += stats.correct;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = positions > 0 ? loss_sum / static_cast<double>(positions) : 0.0;
    m.label_accuracy = positions > 0 ? static_cast<double>(correct) / static_cast<double>(positions) : 0.0;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(m);
    if (log) log << epoch_metrics_json(m) << "\n" << std::flush;
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      save_checkpoint(model_, (fs::path(out_dir) / name).string(), &opt_);
    }
    if (on_epoch) on_epoch(m);
  }

  if (!out_dir.empty()) save_checkpoint(model_, (fs::path(out_dir) / "model.ckpt").string(), &opt_);
  return history;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace pie
