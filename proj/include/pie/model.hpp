#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "pie/labelspace.hpp"
#include "pie/optim.hpp"
#include "pie/tape.hpp"
#include "pie/vocab.hpp"

namespace pie {

enum class HeadMode { Factorized, Default };

const char* to_string(HeadMode m);
HeadMode head_mode_from_string(const std::string& s);

struct ModelConfig {
  int num_layers = 4;
  int hidden_size = 200;
  int intermediate_size = 400;
  int num_heads = 4;
  int max_positions = 64;
  int token_vocab_size = 0;   // filled when the model is built
  int sigma_a_size = 0;       // |Σ_a|
  int transform_count = 0;    // k
  double dropout = 0.1;
  double initializer_range = 0.02;

  void validate() const;
};

// Attention layout for the joint pass: rows [0,L) are the h stream, [L,2L)
// the r units, [2L,3L) the a units. h attends h; r_i attends h_j (j!=i) plus
// itself; a_i attends all h plus itself. Rows at or beyond the true length n
// are padding and may attend only themselves.
std::shared_ptr<const AttentionMask> build_edit_attention_mask(int64_t L, int64_t n);
std::shared_ptr<const AttentionMask> build_plain_attention_mask(int64_t L, int64_t n);

template <class T>
struct EditDistribution {
  Tensor<T> probs;          // [n × |E|], rows sum to 1
  std::vector<int> argmax;  // ties break toward the lower edit index
};

template <class T>
EditDistribution<T> edit_distribution(const Tensor<T>& logits) {
  EditDistribution<T> out;
  out.probs = Tensor<T>(logits.shape);
  out.argmax.resize(static_cast<size_t>(logits.rows()));
  for (int64_t i = 0; i < logits.rows(); ++i) {
    T mx = logits.at(i, 0);
    int best = 0;
    for (int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > mx) {
        mx = logits.at(i, j);
        best = static_cast<int>(j);
      }
    T sum = 0;
    for (int64_t j = 0; j < logits.cols(); ++j) {
      T e = std::exp(logits.at(i, j) - mx);
      out.probs.at(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < logits.cols(); ++j) out.probs.at(i, j) /= sum;
    out.argmax[static_cast<size_t>(i)] = best;
  }
  return out;
}

template <class T>
class PieModel {
 public:
  using NodeId = typename Tape<T>::NodeId;

  PieModel(ModelConfig cfg, Vocabulary vocab, InsertDictionary dict, TransformTable table,
           TokenMode mode, HeadMode head_mode, uint64_t init_seed)
      : cfg_(cfg),
        vocab_(std::move(vocab)),
        dict_(std::move(dict)),
        table_(std::move(table)),
        labels_(dict_, table_),
        mode_(mode),
        head_mode_(head_mode) {
    cfg_.token_vocab_size = vocab_.size();
    cfg_.sigma_a_size = static_cast<int>(dict_.size());
    cfg_.transform_count = static_cast<int>(table_.size());
    cfg_.validate();
    build_parameters();
    init_parameters(init_seed);
    build_insert_bags();
  }

  PieModel(const PieModel&) = delete;
  PieModel& operator=(const PieModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const InsertDictionary& dict() const { return dict_; }
  const TransformTable& transforms() const { return table_; }
  const EditLabelSpace& labels() const { return labels_; }
  TokenMode mode() const { return mode_; }
  HeadMode head_mode() const { return head_mode_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (auto& p : params_) out.push_back(p->name);
    return out;
  }
  Parameter<T>& param(const std::string& name) {
    auto it = param_index_.find(name);
    if (it == param_index_.end()) throw ProgrammingError("no parameter named " + name);
    return *params_[it->second];
  }
  // Parameter names that exist on a plain encoder (everything but the head).
  static bool is_head_param(const std::string& name) { return name.rfind("head.", 0) == 0; }

  uint64_t forward_passes() const { return forward_passes_.load(); }
  void reset_forward_passes() { forward_passes_.store(0); }

  struct Encoded {
    NodeId h = -1, r = -1, a = -1;   // [T × hidden], T = sum of true lengths
    std::vector<int32_t> flat_ids;   // token ids aligned with rows of h
    std::vector<int> lengths;
  };

  struct EncodeOptions {
    bool train = false;
    Rng* dropout_rng = nullptr;
    bool with_edit_units = true;
    const Tensor<T>* r0_override = nullptr;  // [B·L × hidden]
    const Tensor<T>* a0_override = nullptr;
  };

  Encoded encode(Tape<T>& tape, const std::vector<std::vector<int32_t>>& ids,
                 EncodeOptions opt = {}) {
    forward_passes_.fetch_add(1, std::memory_order_relaxed);
    const int64_t B = static_cast<int64_t>(ids.size());
    if (B == 0) throw ProgrammingError("encode called with an empty batch");
    int64_t L = 0;
    for (auto& s : ids) {
      if (s.empty()) throw ProgrammingError("encode called with an empty sequence");
      if (static_cast<int>(s.size()) > cfg_.max_positions)
        throw DataError("input too long: " + std::to_string(s.size()) +
                        " tokens exceeds max_positions " + std::to_string(cfg_.max_positions));
      L = std::max<int64_t>(L, static_cast<int64_t>(s.size()));
    }
    const int64_t streams = opt.with_edit_units ? 3 : 1;
    const int64_t block = streams * L;

    std::vector<int32_t> tok_ids(static_cast<size_t>(B * block));
    std::vector<typename Tape<T>::Bag> pos_bags(static_cast<size_t>(B * block));
    for (int64_t b = 0; b < B; ++b) {
      int64_t n = static_cast<int64_t>(ids[b].size());
      for (int64_t st = 0; st < streams; ++st) {
        for (int64_t i = 0; i < L; ++i) {
          size_t row = static_cast<size_t>(b * block + st * L + i);
          if (st == 0)
            tok_ids[row] = i < n ? ids[b][static_cast<size_t>(i)] : Vocabulary::kPad;
          else
            tok_ids[row] = Vocabulary::kMask;
          if (st == 2 && i + 1 < n)
            pos_bags[row] = {{static_cast<int32_t>(i), T(0.5)}, {static_cast<int32_t>(i + 1), T(0.5)}};
          else
            pos_bags[row] = {{static_cast<int32_t>(i), T(1)}};
        }
      }
    }

    NodeId tok_table = tape.parameter(param("emb.token"));
    NodeId pos_table = tape.parameter(param("emb.pos"));
    NodeId x = tape.add(tape.embedding_lookup(tok_table, std::move(tok_ids)),
                        tape.embedding_bag(pos_table, std::move(pos_bags)));

    if (opt.with_edit_units && (opt.r0_override || opt.a0_override)) {
      for (int st = 1; st <= 2; ++st) {
        const Tensor<T>* ov = st == 1 ? opt.r0_override : opt.a0_override;
        if (!ov) continue;
        std::vector<int64_t> rows;
        rows.reserve(static_cast<size_t>(B * L));
        for (int64_t b = 0; b < B; ++b)
          for (int64_t i = 0; i < L; ++i) rows.push_back(b * block + st * L + i);
        x = tape.replace_rows(x, std::move(rows), *ov);
      }
    }

    x = tape.layer_norm(x, tape.parameter(param("emb.ln.gain")), tape.parameter(param("emb.ln.bias")));
    T p = static_cast<T>(cfg_.dropout);
    if (opt.train && opt.dropout_rng && p > T(0)) x = tape.dropout(x, p, *opt.dropout_rng);

    AttentionSpec<T> spec;
    spec.num_heads = cfg_.num_heads;
    if (opt.train && opt.dropout_rng && p > T(0)) {
      spec.dropout_p = p;
      spec.dropout_rng = opt.dropout_rng;
    }
    for (int64_t b = 0; b < B; ++b) {
      int64_t n = static_cast<int64_t>(ids[b].size());
      spec.segments.push_back(
          {b * block, opt.with_edit_units ? edit_mask(L, n) : plain_mask(L, n)});
    }

    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string pre = "layer" + std::to_string(l) + ".";
      NodeId q = tape.add_bias(tape.matmul(x, tape.parameter(param(pre + "attn.wq"))),
                               tape.parameter(param(pre + "attn.bq")));
      NodeId k = tape.add_bias(tape.matmul(x, tape.parameter(param(pre + "attn.wk"))),
                               tape.parameter(param(pre + "attn.bk")));
      NodeId v = tape.add_bias(tape.matmul(x, tape.parameter(param(pre + "attn.wv"))),
                               tape.parameter(param(pre + "attn.bv")));
      NodeId at = tape.masked_attention(q, k, v, spec);
      at = tape.add_bias(tape.matmul(at, tape.parameter(param(pre + "attn.wo"))),
                         tape.parameter(param(pre + "attn.bo")));
      if (opt.train && opt.dropout_rng && p > T(0)) at = tape.dropout(at, p, *opt.dropout_rng);
      x = tape.layer_norm(tape.add(x, at), tape.parameter(param(pre + "ln1.gain")),
                          tape.parameter(param(pre + "ln1.bias")));
      NodeId f = tape.add_bias(tape.matmul(x, tape.parameter(param(pre + "ffn.w1"))),
                               tape.parameter(param(pre + "ffn.b1")));
      f = tape.gelu(f);
      f = tape.add_bias(tape.matmul(f, tape.parameter(param(pre + "ffn.w2"))),
                        tape.parameter(param(pre + "ffn.b2")));
      if (opt.train && opt.dropout_rng && p > T(0)) f = tape.dropout(f, p, *opt.dropout_rng);
      x = tape.layer_norm(tape.add(x, f), tape.parameter(param(pre + "ln2.gain")),
                          tape.parameter(param(pre + "ln2.bias")));
    }

    Encoded enc;
    enc.lengths.reserve(static_cast<size_t>(B));
    std::vector<int64_t> h_idx, r_idx, a_idx;
    for (int64_t b = 0; b < B; ++b) {
      int64_t n = static_cast<int64_t>(ids[b].size());
      enc.lengths.push_back(static_cast<int>(n));
      for (int64_t i = 0; i < n; ++i) {
        h_idx.push_back(b * block + i);
        enc.flat_ids.push_back(ids[b][static_cast<size_t>(i)]);
        if (opt.with_edit_units) {
          r_idx.push_back(b * block + L + i);
          a_idx.push_back(b * block + 2 * L + i);
        }
      }
    }
    enc.h = tape.gather_rows(x, std::move(h_idx));
    if (opt.with_edit_units) {
      enc.r = tape.gather_rows(x, std::move(r_idx));
      enc.a = tape.gather_rows(x, std::move(a_idx));
    }
    return enc;
  }

  NodeId logits(Tape<T>& tape, const Encoded& enc) {
    if (head_mode_ == HeadMode::Default) return default_logits(tape, enc.h);
    return factorized_logits(tape, enc.h, enc.r, enc.a, enc.flat_ids);
  }

  // Eq. 3 logit assembly from explicit h/r/a states; exposed separately so
  // tests can feed hand-set states.
  NodeId factorized_logits(Tape<T>& tape, NodeId h, NodeId r, NodeId a,
                           const std::vector<int32_t>& x_ids) {
    const int K = labels_.transform_count();
    const int M = labels_.insert_count();
    NodeId tok_table = tape.parameter(param("emb.token"));
    NodeId theta = tape.parameter(param("head.theta"));
    NodeId base = tape.matmul_nt(h, theta);
    NodeId copy = tape.rowwise_dot(tape.embedding_lookup(tok_table, x_ids), h);
    NodeId app = -1, repw = -1, repx = -1;
    if (M > 0) {
      NodeId aphi = tape.embedding_bag(tok_table, insert_bags_);
      app = tape.matmul_nt(a, aphi);
      repw = tape.matmul_nt(r, aphi);
      repx = tape.rowwise_dot(tape.embedding_lookup(tok_table, x_ids), r);
    }
    return assemble_factorized(tape, base, copy, app, repw, repx, K, M);
  }

  NodeId default_logits(Tape<T>& tape, NodeId h) {
    return tape.matmul_nt(h, tape.parameter(param("head.W")));
  }

 private:
  void build_parameters() {
    auto make = [&](const std::string& name, std::vector<int64_t> shape) {
      param_index_.emplace(name, params_.size());
      params_.push_back(std::make_unique<Parameter<T>>(name, Tensor<T>::zeros(std::move(shape))));
    };
    int64_t d = cfg_.hidden_size, ff = cfg_.intermediate_size;
    make("emb.token", {cfg_.token_vocab_size, d});
    make("emb.pos", {cfg_.max_positions, d});
    make("emb.ln.gain", {d});
    make("emb.ln.bias", {d});
    for (int l = 0; l < cfg_.num_layers; ++l) {
      std::string pre = "layer" + std::to_string(l) + ".";
      make(pre + "attn.wq", {d, d});
      make(pre + "attn.bq", {d});
      make(pre + "attn.wk", {d, d});
      make(pre + "attn.bk", {d});
      make(pre + "attn.wv", {d, d});
      make(pre + "attn.bv", {d});
      make(pre + "attn.wo", {d, d});
      make(pre + "attn.bo", {d});
      make(pre + "ln1.gain", {d});
      make(pre + "ln1.bias", {d});
      make(pre + "ffn.w1", {d, ff});
      make(pre + "ffn.b1", {ff});
      make(pre + "ffn.w2", {ff, d});
      make(pre + "ffn.b2", {d});
      make(pre + "ln2.gain", {d});
      make(pre + "ln2.bias", {d});
    }
    if (head_mode_ == HeadMode::Factorized)
      make("head.theta", {labels_.size(), d});
    else
      make("head.W", {labels_.size(), d});
  }

  void init_parameters(uint64_t seed) {
    Rng rng(seed);
    T range = static_cast<T>(cfg_.initializer_range);
    for (auto& p : params_) {
      bool is_gain = p->name.ends_with("gain");
      bool is_bias = p->name.ends_with("bias") || p->name.ends_with(".bq") ||
                     p->name.ends_with(".bk") || p->name.ends_with(".bv") ||
                     p->name.ends_with(".bo") || p->name.ends_with(".b1") ||
                     p->name.ends_with(".b2");
      if (is_gain) {
        p->value.fill(T(1));
      } else if (is_bias) {
        p->value.fill(T(0));
      } else {
        for (auto& x : p->value.v) x = static_cast<T>(rng.next_normal()) * range;
      }
    }
    // padding embedding stays zero
    T* pad_row = param("emb.token").value.row_ptr(Vocabulary::kPad);
    std::fill_n(pad_row, cfg_.hidden_size, T(0));
  }

  void build_insert_bags() {
    insert_bags_.clear();
    for (const auto& e : dict_.entries) {
      typename Tape<T>::Bag bag;
      for (const Token& tok : split_payload(e.text, mode_))
        bag.push_back({vocab_.id(tok), T(1)});
      insert_bags_.push_back(std::move(bag));
    }
  }

  NodeId assemble_factorized(Tape<T>& tape, NodeId base, NodeId copy, NodeId app, NodeId repw,
                             NodeId repx, int K, int M) {
    const Tensor<T>& Bv = tape.value(base);
    const Tensor<T>& Cv = tape.value(copy);
    int64_t rows = Bv.rows(), E = Bv.cols();
    if (E != 2 + K + 2 * M) throw ProgrammingError("factorized head has wrong width");
    Tensor<T> out = Bv;
    const int a0 = 2 + K, r0 = 2 + K + M;
    for (int64_t i = 0; i < rows; ++i) {
      T c = Cv.v[i];
      out.at(i, 0) += c;
      for (int j = 0; j < K; ++j) out.at(i, 2 + j) += c;
      if (M > 0) {
        const Tensor<T>& Av = tape.value(app);
        const Tensor<T>& Rw = tape.value(repw);
        T rx = tape.value(repx).v[i];
        for (int j = 0; j < M; ++j) out.at(i, a0 + j) += c + Av.at(i, j);
        for (int j = 0; j < M; ++j) out.at(i, r0 + j) += Rw.at(i, j) - rx;
      }
    }
    std::vector<NodeId> inputs{base, copy};
    if (M > 0) {
      inputs.push_back(app);
      inputs.push_back(repw);
      inputs.push_back(repx);
    }
    return tape.custom(std::move(inputs), std::move(out),
                       [base, copy, app, repw, repx, K, M, a0, r0](Tape<T>& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      int64_t rows = g.rows();
      if (t.needs_grad(base))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(base).v[i] += g.v[i];
      if (t.needs_grad(copy)) {
        for (int64_t i = 0; i < rows; ++i) {
          T s = g.at(i, 0);
          for (int j = 0; j < K; ++j) s += g.at(i, 2 + j);
          for (int j = 0; j < M; ++j) s += g.at(i, a0 + j);
          t.grad(copy).v[i] += s;
        }
      }
      if (M > 0) {
        for (int64_t i = 0; i < rows; ++i) {
          T rsum = 0;
          for (int j = 0; j < M; ++j) {
            if (t.needs_grad(app)) t.grad(app).at(i, j) += g.at(i, a0 + j);
            if (t.needs_grad(repw)) t.grad(repw).at(i, j) += g.at(i, r0 + j);
            rsum += g.at(i, r0 + j);
          }
          if (t.needs_grad(repx)) t.grad(repx).v[i] -= rsum;
        }
      }
    });
  }

  std::shared_ptr<const AttentionMask> edit_mask(int64_t L, int64_t n) {
    return cached_mask(L, n, true);
  }
  std::shared_ptr<const AttentionMask> plain_mask(int64_t L, int64_t n) {
    return cached_mask(L, n, false);
  }
  std::shared_ptr<const AttentionMask> cached_mask(int64_t L, int64_t n, bool edit) {
    uint64_t key = (static_cast<uint64_t>(L) << 32) | (static_cast<uint64_t>(n) << 1) |
                   (edit ? 1u : 0u);
    std::lock_guard<std::mutex> lock(mask_mutex_);
    auto it = mask_cache_.find(key);
    if (it != mask_cache_.end()) return it->second;
    if (mask_cache_.size() > 256) mask_cache_.clear();
    auto mask = edit ? build_edit_attention_mask(L, n) : build_plain_attention_mask(L, n);
    mask_cache_.emplace(key, mask);
    return mask;
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  InsertDictionary dict_;
  TransformTable table_;
  EditLabelSpace labels_;
  TokenMode mode_;
  HeadMode head_mode_;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, size_t> param_index_;
  std::vector<typename Tape<T>::Bag> insert_bags_;
  std::unordered_map<uint64_t, std::shared_ptr<const AttentionMask>> mask_cache_;
  std::mutex mask_mutex_;
  std::atomic<uint64_t> forward_passes_{0};
};

}  // namespace pie
