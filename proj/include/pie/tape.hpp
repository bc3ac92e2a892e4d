#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "pie/rng.hpp"
#include "pie/tensor.hpp"

namespace pie {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> val) : name(std::move(n)), value(std::move(val)) {
    grad = Tensor<T>::zeros(value.shape);
  }
  void zero_grad() { grad.fill(T(0)); }
};

namespace detail {

template <class T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<EigenRowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const EigenRowMat<T>>;

// C (+)= A[m×k] · B[k×n]
template <class T>
void gemm_acc(const T* a, int64_t m, int64_t k, const T* b, int64_t n, T* c, bool accumulate) {
  CMapMat<T> A(a, m, k), B(b, k, n);
  MapMat<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// C (+)= A[m×k] · B[n×k]ᵀ
template <class T>
void gemm_nt_acc(const T* a, int64_t m, int64_t k, const T* b, int64_t n, T* c, bool accumulate) {
  CMapMat<T> A(a, m, k), B(b, n, k);
  MapMat<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// C (+)= A[k×m]ᵀ · B[k×n]
template <class T>
void gemm_tn_acc(const T* a, int64_t k, int64_t m, const T* b, int64_t n, T* c, bool accumulate) {
  CMapMat<T> A(a, k, m), B(b, k, n);
  MapMat<T> C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

}  // namespace detail

// Boolean attention mask for one segment: allow[q*rows+k] says query row q may
// attend to key row k within the segment.
struct AttentionMask {
  int64_t rows = 0;
  std::vector<uint8_t> allow;

  AttentionMask() = default;
  explicit AttentionMask(int64_t r) : rows(r), allow(static_cast<size_t>(r * r), 0) {}
  uint8_t& at(int64_t q, int64_t k) { return allow[static_cast<size_t>(q * rows + k)]; }
  uint8_t at(int64_t q, int64_t k) const { return allow[static_cast<size_t>(q * rows + k)]; }
};

struct AttentionSegment {
  int64_t offset = 0;  // first row of the segment in Q/K/V
  std::shared_ptr<const AttentionMask> mask;
};

template <class T>
struct AttentionSpec {
  int num_heads = 1;
  T dropout_p = T(0);
  Rng* dropout_rng = nullptr;
  std::vector<AttentionSegment> segments;

  static AttentionSpec single(std::shared_ptr<const AttentionMask> mask, int heads = 1) {
    AttentionSpec s;
    s.num_heads = heads;
    s.segments.push_back({0, std::move(mask)});
    return s;
  }
};

// Eagerly-evaluated reverse-mode tape. Ops compute their value immediately and
// record a backward closure; backward() walks nodes in reverse creation order
// and accumulates leaf gradients into their bound Parameters.
template <class T>
class Tape {
 public:
  using NodeId = int32_t;

  NodeId constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, false); }

  NodeId parameter(Parameter<T>& p) {
    NodeId id = push(p.value, {}, nullptr, true);
    nodes_[id].param = &p;
    return id;
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  Tensor<T>& grad(NodeId id) { return nodes_.at(id).grad; }
  bool needs_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
  size_t size() const { return nodes_.size(); }

  // Generic custom op; `backward` reads grad(self) and accumulates into the
  // grads of its inputs.
  NodeId custom(std::vector<NodeId> inputs, Tensor<T> value,
                std::function<void(Tape&, NodeId)> backward) {
    bool ng = false;
    for (NodeId i : inputs) ng = ng || nodes_.at(i).needs_grad;
    return push(std::move(value), std::move(inputs), std::move(backward), ng);
  }

  // When accumulate_into_params is false the caller extracts leaf gradients
  // via collect_param_grads (used by the chunk-parallel training path).
  void backward(NodeId loss, bool accumulate_into_params = true) {
    if (nodes_.empty()) throw ProgrammingError("backward called on an empty tape");
    if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
      throw ProgrammingError("backward called with an invalid node id");
    if (nodes_[loss].value.numel() != 1)
      throw ProgrammingError("backward requires a scalar loss, got shape " +
                             nodes_[loss].value.shape_str());
    for (auto& n : nodes_)
      if (n.needs_grad) {
        n.grad = Tensor<T>::zeros(n.value.shape);
      }
    nodes_[loss].grad.fill(T(1));
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param && accumulate_into_params) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) n.param->grad.v[i] += n.grad.v[i];
      }
    }
  }

  // Sum of this tape's leaf gradients per parameter (a parameter may appear
  // as several leaves).
  std::vector<std::pair<Parameter<T>*, Tensor<T>>> collect_param_grads() const {
    std::vector<std::pair<Parameter<T>*, Tensor<T>>> out;
    for (const Node& n : nodes_) {
      if (!n.param) continue;
      auto it = std::find_if(out.begin(), out.end(),
                             [&](const auto& kv) { return kv.first == n.param; });
      if (it == out.end()) {
        out.emplace_back(n.param, n.grad);
      } else {
        for (int64_t i = 0; i < n.grad.numel(); ++i) it->second.v[i] += n.grad.v[i];
      }
    }
    return out;
  }

  // ---- primitives ----

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (A.cols() != B.rows())
      throw ProgrammingError("matmul shape mismatch " + A.shape_str() + " x " + B.shape_str());
    Tensor<T> out({A.rows(), B.cols()});
    detail::gemm_acc(A.v.data(), A.rows(), A.cols(), B.v.data(), B.cols(), out.v.data(), false);
    return custom({a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>&A = t.value(a), &B = t.value(b);
      if (t.needs_grad(a))
        detail::gemm_nt_acc(g.v.data(), g.rows(), g.cols(), B.v.data(), B.rows(),
                            t.grad(a).v.data(), true);
      if (t.needs_grad(b))
        detail::gemm_tn_acc(A.v.data(), A.rows(), A.cols(), g.v.data(), g.cols(),
                            t.grad(b).v.data(), true);
    });
  }

  // a · bᵀ, with b stored row-major [n×k]
  NodeId matmul_nt(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (A.cols() != B.cols())
      throw ProgrammingError("matmul_nt shape mismatch " + A.shape_str() + " x " + B.shape_str());
    Tensor<T> out({A.rows(), B.rows()});
    detail::gemm_nt_acc(A.v.data(), A.rows(), A.cols(), B.v.data(), B.rows(), out.v.data(), false);
    return custom({a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);  // [m×n]
      const Tensor<T>&A = t.value(a), &B = t.value(b);
      if (t.needs_grad(a))  // dA += g · B
        detail::gemm_acc(g.v.data(), g.rows(), g.cols(), B.v.data(), B.cols(),
                         t.grad(a).v.data(), true);
      if (t.needs_grad(b))  // dB += gᵀ · A
        detail::gemm_tn_acc(g.v.data(), g.rows(), g.cols(), A.v.data(), A.cols(),
                            t.grad(b).v.data(), true);
    });
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (!A.same_shape(B))
      throw ProgrammingError("add shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.v[i] += B.v[i];
    return custom({a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      if (t.needs_grad(a))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i];
      if (t.needs_grad(b))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(b).v[i] += g.v[i];
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (!A.same_shape(B))
      throw ProgrammingError("sub shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.v[i] -= B.v[i];
    return custom({a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      if (t.needs_grad(a))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i];
      if (t.needs_grad(b))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(b).v[i] -= g.v[i];
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (!A.same_shape(B))
      throw ProgrammingError("mul shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < out.numel(); ++i) out.v[i] *= B.v[i];
    return custom({a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>&A = t.value(a), &B = t.value(b);
      if (t.needs_grad(a))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i] * B.v[i];
      if (t.needs_grad(b))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(b).v[i] += g.v[i] * A.v[i];
    });
  }

  NodeId mul_scalar(NodeId a, T s) {
    Tensor<T> out = value(a);
    for (auto& x : out.v) x *= s;
    return custom({a}, std::move(out), [a, s](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      if (t.needs_grad(a))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i] * s;
    });
  }

  // bias is a length-`cols` vector broadcast over rows
  NodeId add_bias(NodeId a, NodeId bias) {
    const Tensor<T>&A = value(a), &B = value(bias);
    if (B.numel() != A.cols())
      throw ProgrammingError("add_bias shape mismatch " + A.shape_str() + " + " + B.shape_str());
    Tensor<T> out = A;
    for (int64_t i = 0; i < A.rows(); ++i)
      for (int64_t j = 0; j < A.cols(); ++j) out.at(i, j) += B.v[j];
    return custom({a, bias}, std::move(out), [a, bias](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      if (t.needs_grad(a))
        for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i];
      if (t.needs_grad(bias)) {
        Tensor<T>& gb = t.grad(bias);
        for (int64_t i = 0; i < g.rows(); ++i)
          for (int64_t j = 0; j < g.cols(); ++j) gb.v[j] += g.at(i, j);
      }
    });
  }

  NodeId reduce_sum(NodeId a) {
    const Tensor<T>& A = value(a);
    T s = 0;
    for (T x : A.v) s += x;
    return custom({a}, Tensor<T>::scalar(s), [a](Tape& t, NodeId self) {
      T g = t.grad(self).v[0];
      if (t.needs_grad(a))
        for (auto& x : t.grad(a).v) x += g;
    });
  }

  // [m×d],[m×d] -> [m×1] of per-row dot products
  NodeId rowwise_dot(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (!A.same_shape(B))
      throw ProgrammingError("rowwise_dot shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out({A.rows(), 1});
    for (int64_t i = 0; i < A.rows(); ++i) {
      T s = 0;
      for (int64_t j = 0; j < A.cols(); ++j) s += A.at(i, j) * B.at(i, j);
      out.v[i] = s;
    }
    return custom({a, b}, std::move(out), [a, b](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>&A = t.value(a), &B = t.value(b);
      for (int64_t i = 0; i < A.rows(); ++i) {
        T gi = g.v[i];
        if (t.needs_grad(a))
          for (int64_t j = 0; j < A.cols(); ++j) t.grad(a).at(i, j) += gi * B.at(i, j);
        if (t.needs_grad(b))
          for (int64_t j = 0; j < A.cols(); ++j) t.grad(b).at(i, j) += gi * A.at(i, j);
      }
    });
  }

  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, T eps = T(1e-12)) {
    const Tensor<T>&X = value(x), &G = value(gain), &B = value(bias);
    if (G.numel() != X.cols() || B.numel() != X.cols())
      throw ProgrammingError("layer_norm parameter shape mismatch for input " + X.shape_str());
    int64_t rows = X.rows(), d = X.cols();
    auto xhat = std::make_shared<Tensor<T>>(X.shape);
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    Tensor<T> out(X.shape);
    for (int64_t i = 0; i < rows; ++i) {
      T mean = 0;
      for (int64_t j = 0; j < d; ++j) mean += X.at(i, j);
      mean /= static_cast<T>(d);
      T var = 0;
      for (int64_t j = 0; j < d; ++j) {
        T c = X.at(i, j) - mean;
        var += c * c;
      }
      var /= static_cast<T>(d);
      T inv = T(1) / std::sqrt(var + eps);
      (*inv_std)[i] = inv;
      for (int64_t j = 0; j < d; ++j) {
        T xn = (X.at(i, j) - mean) * inv;
        xhat->at(i, j) = xn;
        out.at(i, j) = xn * G.v[j] + B.v[j];
      }
    }
    return custom({x, gain, bias}, std::move(out),
                  [x, gain, bias, xhat, inv_std](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& G = t.value(gain);
      int64_t rows = g.rows(), d = g.cols();
      if (t.needs_grad(gain) || t.needs_grad(bias)) {
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < d; ++j) {
            if (t.needs_grad(gain)) t.grad(gain).v[j] += g.at(i, j) * xhat->at(i, j);
            if (t.needs_grad(bias)) t.grad(bias).v[j] += g.at(i, j);
          }
      }
      if (t.needs_grad(x)) {
        Tensor<T>& gx = t.grad(x);
        for (int64_t i = 0; i < rows; ++i) {
          T mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (int64_t j = 0; j < d; ++j) {
            T dxh = g.at(i, j) * G.v[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat->at(i, j);
          }
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          T inv = (*inv_std)[i];
          for (int64_t j = 0; j < d; ++j) {
            T dxh = g.at(i, j) * G.v[j];
            gx.at(i, j) += inv * (dxh - mean_dxhat - xhat->at(i, j) * mean_dxhat_xhat);
          }
        }
      }
    });
  }

  NodeId gelu(NodeId a) {
    const Tensor<T>& A = value(a);
    Tensor<T> out = A;
    for (auto& x : out.v) {
      double xd = static_cast<double>(x);
      x = static_cast<T>(0.5 * xd * (1.0 + std::erf(xd * M_SQRT1_2)));
    }
    return custom({a}, std::move(out), [a](Tape& t, NodeId self) {
      if (!t.needs_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>& A = t.value(a);
      constexpr double inv_sqrt_2pi = 0.3989422804014327;
      for (int64_t i = 0; i < g.numel(); ++i) {
        double x = static_cast<double>(A.v[i]);
        double d = 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        t.grad(a).v[i] += g.v[i] * static_cast<T>(d);
      }
    });
  }

  NodeId softmax_rows(NodeId a) {
    const Tensor<T>& A = value(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.rows(); ++i) {
      T mx = A.at(i, 0);
      for (int64_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A.at(i, j));
      T sum = 0;
      for (int64_t j = 0; j < A.cols(); ++j) {
        T e = std::exp(A.at(i, j) - mx);
        out.at(i, j) = e;
        sum += e;
      }
      for (int64_t j = 0; j < A.cols(); ++j) out.at(i, j) /= sum;
    }
    auto probs = std::make_shared<Tensor<T>>(out);
    return custom({a}, std::move(out), [a, probs](Tape& t, NodeId self) {
      if (!t.needs_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      for (int64_t i = 0; i < g.rows(); ++i) {
        T dot = 0;
        for (int64_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * probs->at(i, j);
        for (int64_t j = 0; j < g.cols(); ++j)
          t.grad(a).at(i, j) += probs->at(i, j) * (g.at(i, j) - dot);
      }
    });
  }

  NodeId embedding_lookup(NodeId table, std::vector<int32_t> ids) {
    const Tensor<T>& Tb = value(table);
    int64_t d = Tb.cols();
    Tensor<T> out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= Tb.rows())
        throw ProgrammingError("embedding id " + std::to_string(ids[i]) + " out of range for " +
                               Tb.shape_str());
      std::copy_n(Tb.row_ptr(ids[i]), d, out.row_ptr(static_cast<int64_t>(i)));
    }
    auto idv = std::make_shared<std::vector<int32_t>>(std::move(ids));
    return custom({table}, std::move(out), [table, idv](Tape& t, NodeId self) {
      if (!t.needs_grad(table)) return;
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gt = t.grad(table);
      int64_t d = g.cols();
      for (size_t i = 0; i < idv->size(); ++i) {
        const T* src = g.row_ptr(static_cast<int64_t>(i));
        T* dst = gt.row_ptr((*idv)[i]);
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  // One output row per bag: the weighted sum of table rows.
  using Bag = std::vector<std::pair<int32_t, T>>;
  NodeId embedding_bag(NodeId table, std::vector<Bag> bags) {
    const Tensor<T>& Tb = value(table);
    int64_t d = Tb.cols();
    Tensor<T> out({static_cast<int64_t>(bags.size()), d});
    for (size_t i = 0; i < bags.size(); ++i) {
      T* dst = out.row_ptr(static_cast<int64_t>(i));
      for (auto& [id, w] : bags[i]) {
        const T* src = Tb.row_ptr(id);
        for (int64_t j = 0; j < d; ++j) dst[j] += w * src[j];
      }
    }
    auto bv = std::make_shared<std::vector<Bag>>(std::move(bags));
    return custom({table}, std::move(out), [table, bv](Tape& t, NodeId self) {
      if (!t.needs_grad(table)) return;
      const Tensor<T>& g = t.grad(self);
      Tensor<T>& gt = t.grad(table);
      int64_t d = g.cols();
      for (size_t i = 0; i < bv->size(); ++i) {
        const T* src = g.row_ptr(static_cast<int64_t>(i));
        for (auto& [id, w] : (*bv)[i]) {
          T* dst = gt.row_ptr(id);
          for (int64_t j = 0; j < d; ++j) dst[j] += w * src[j];
        }
      }
    });
  }

  NodeId gather_rows(NodeId a, std::vector<int64_t> idx) {
    const Tensor<T>& A = value(a);
    int64_t d = A.cols();
    Tensor<T> out({static_cast<int64_t>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(A.row_ptr(idx[i]), d, out.row_ptr(static_cast<int64_t>(i)));
    auto iv = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return custom({a}, std::move(out), [a, iv](Tape& t, NodeId self) {
      if (!t.needs_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      int64_t d = g.cols();
      for (size_t i = 0; i < iv->size(); ++i) {
        const T* src = g.row_ptr(static_cast<int64_t>(i));
        T* dst = t.grad(a).row_ptr((*iv)[i]);
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  // Overwrite the given rows with constant values; gradient flows only
  // through the untouched rows. Test hook for perturbing r0/a0 inputs.
  NodeId replace_rows(NodeId a, std::vector<int64_t> idx, const Tensor<T>& rows) {
    const Tensor<T>& A = value(a);
    Tensor<T> out = A;
    int64_t d = A.cols();
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(rows.row_ptr(static_cast<int64_t>(i)), d, out.row_ptr(idx[i]));
    auto iv = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return custom({a}, std::move(out), [a, iv](Tape& t, NodeId self) {
      if (!t.needs_grad(a)) return;
      Tensor<T> g = t.grad(self);
      int64_t d = g.cols();
      for (int64_t r : *iv) std::fill_n(g.row_ptr(r), d, T(0));
      for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i];
    });
  }

  // Inverted dropout; scales kept activations by 1/(1-p).
  NodeId dropout(NodeId a, T p, Rng& rng) {
    if (p <= T(0)) return a;
    const Tensor<T>& A = value(a);
    auto mask = std::make_shared<std::vector<T>>(A.v.size());
    T scale = T(1) / (T(1) - p);
    Tensor<T> out = A;
    for (size_t i = 0; i < A.v.size(); ++i) {
      T m = rng.next_double() < static_cast<double>(p) ? T(0) : scale;
      (*mask)[i] = m;
      out.v[i] *= m;
    }
    return custom({a}, std::move(out), [a, mask](Tape& t, NodeId self) {
      if (!t.needs_grad(a)) return;
      const Tensor<T>& g = t.grad(self);
      for (int64_t i = 0; i < g.numel(); ++i) t.grad(a).v[i] += g.v[i] * (*mask)[i];
    });
  }

  // Multi-head scaled dot-product attention over per-segment boolean masks.
  // Disallowed logits are -inf (their probability is exactly 0), and the
  // accumulations over keys are sequential in key order so that a row's output
  // depends only on its allowed keys — this is what makes the h-stream
  // bit-identical with and without r/a rows present.
  NodeId masked_attention(NodeId q, NodeId k, NodeId v, AttentionSpec<T> spec) {
    const Tensor<T>&Q = value(q), &K = value(k), &V = value(v);
    if (!Q.same_shape(K) || !Q.same_shape(V))
      throw ProgrammingError("attention expects Q,K,V of equal shape, got " + Q.shape_str() +
                             ", " + K.shape_str() + ", " + V.shape_str());
    int64_t d = Q.cols();
    int H = spec.num_heads;
    if (d % H != 0)
      throw ProgrammingError("attention width " + std::to_string(d) +
                             " not divisible by heads " + std::to_string(H));
    int64_t dh = d / H;
    T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    struct Saved {
      // per segment, per head: probs (post-dropout) and pre-dropout probs
      std::vector<std::vector<Tensor<T>>> probs;
      std::vector<std::vector<Tensor<T>>> probs_raw;  // empty when no dropout
      AttentionSpec<T> spec;
      T scale;
      int64_t dh;
    };
    auto saved = std::make_shared<Saved>();
    saved->spec = spec;
    saved->scale = scale;
    saved->dh = dh;
    bool use_dropout = spec.dropout_p > T(0) && spec.dropout_rng != nullptr;
    T keep_scale = use_dropout ? T(1) / (T(1) - spec.dropout_p) : T(1);

    Tensor<T> out(Q.shape);
    saved->probs.resize(spec.segments.size());
    if (use_dropout) saved->probs_raw.resize(spec.segments.size());
    for (size_t s = 0; s < spec.segments.size(); ++s) {
      const AttentionSegment& seg = spec.segments[s];
      const AttentionMask& mask = *seg.mask;
      int64_t S = mask.rows, off = seg.offset;
      saved->probs[s].assign(H, Tensor<T>({S, S}));
      if (use_dropout) saved->probs_raw[s].assign(H, Tensor<T>({S, S}));
      std::vector<T> logits(static_cast<size_t>(S));
      for (int h = 0; h < H; ++h) {
        Tensor<T>& P = saved->probs[s][h];
        int64_t hoff = h * dh;
        for (int64_t qi = 0; qi < S; ++qi) {
          const T* qrow = Q.row_ptr(off + qi) + hoff;
          T mx = -std::numeric_limits<T>::infinity();
          for (int64_t kj = 0; kj < S; ++kj) {
            if (!mask.at(qi, kj)) continue;
            const T* krow = K.row_ptr(off + kj) + hoff;
            T dot = 0;
            for (int64_t c = 0; c < dh; ++c) dot += qrow[c] * krow[c];
            dot *= scale;
            logits[kj] = dot;
            mx = std::max(mx, dot);
          }
          T sum = 0;
          for (int64_t kj = 0; kj < S; ++kj) {
            if (!mask.at(qi, kj)) {
              P.at(qi, kj) = 0;
              continue;
            }
            T e = std::exp(logits[kj] - mx);
            P.at(qi, kj) = e;
            sum += e;
          }
          T inv = T(1) / sum;
          T* orow = out.row_ptr(off + qi) + hoff;
          std::fill_n(orow, dh, T(0));
          for (int64_t kj = 0; kj < S; ++kj) {
            if (!mask.at(qi, kj)) continue;
            T p = P.at(qi, kj) * inv;
            if (use_dropout) {
              saved->probs_raw[s][h].at(qi, kj) = p;
              p = spec.dropout_rng->next_double() < static_cast<double>(spec.dropout_p)
                      ? T(0)
                      : p * keep_scale;
            }
            P.at(qi, kj) = p;
            const T* vrow = V.row_ptr(off + kj) + hoff;
            for (int64_t c = 0; c < dh; ++c) orow[c] += p * vrow[c];
          }
        }
      }
    }

    return custom({q, k, v}, std::move(out), [q, k, v, saved](Tape& t, NodeId self) {
      const Tensor<T>& g = t.grad(self);
      const Tensor<T>&Q = t.value(q), &K = t.value(k), &V = t.value(v);
      int H = saved->spec.num_heads;
      int64_t dh = saved->dh;
      T scale = saved->scale;
      bool use_dropout = !saved->probs_raw.empty();
      T keep_scale =
          use_dropout ? T(1) / (T(1) - saved->spec.dropout_p) : T(1);
      Tensor<T>&gq = t.grad(q), &gk = t.grad(k), &gv = t.grad(v);
      std::vector<T> dp(1), dlog(1);
      for (size_t s = 0; s < saved->spec.segments.size(); ++s) {
        const AttentionSegment& seg = saved->spec.segments[s];
        const AttentionMask& mask = *seg.mask;
        int64_t S = mask.rows, off = seg.offset;
        dp.assign(static_cast<size_t>(S), T(0));
        dlog.assign(static_cast<size_t>(S), T(0));
        for (int h = 0; h < H; ++h) {
          const Tensor<T>& P = saved->probs[s][h];
          int64_t hoff = h * dh;
          for (int64_t qi = 0; qi < S; ++qi) {
            const T* grow = g.row_ptr(off + qi) + hoff;
            // dV and d(post-dropout probs)
            for (int64_t kj = 0; kj < S; ++kj) {
              if (!mask.at(qi, kj)) continue;
              T p = P.at(qi, kj);
              T* gvrow = gv.row_ptr(off + kj) + hoff;
              const T* vrow = V.row_ptr(off + kj) + hoff;
              T d_post = 0;
              for (int64_t c = 0; c < dh; ++c) {
                gvrow[c] += p * grow[c];
                d_post += grow[c] * vrow[c];
              }
              if (use_dropout) {
                // through dropout: zero where dropped, scaled where kept
                T raw = saved->probs_raw[s][h].at(qi, kj);
                dp[kj] = (p == T(0) && raw != T(0)) ? T(0) : d_post * keep_scale;
              } else {
                dp[kj] = d_post;
              }
            }
            // softmax backward on the raw probs
            T dot = 0;
            for (int64_t kj = 0; kj < S; ++kj) {
              if (!mask.at(qi, kj)) continue;
              T raw = use_dropout ? saved->probs_raw[s][h].at(qi, kj) : P.at(qi, kj);
              dot += dp[kj] * raw;
            }
            for (int64_t kj = 0; kj < S; ++kj) {
              if (!mask.at(qi, kj)) continue;
              T raw = use_dropout ? saved->probs_raw[s][h].at(qi, kj) : P.at(qi, kj);
              dlog[kj] = raw * (dp[kj] - dot);
            }
            // dQ, dK
            T* gqrow = gq.row_ptr(off + qi) + hoff;
            const T* qrow = Q.row_ptr(off + qi) + hoff;
            for (int64_t kj = 0; kj < S; ++kj) {
              if (!mask.at(qi, kj)) continue;
              T dl = dlog[kj] * scale;
              const T* krow = K.row_ptr(off + kj) + hoff;
              T* gkrow = gk.row_ptr(off + kj) + hoff;
              for (int64_t c = 0; c < dh; ++c) {
                gqrow[c] += dl * krow[c];
                gkrow[c] += dl * qrow[c];
              }
            }
          }
        }
      }
    });
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<NodeId> inputs;
    std::function<void(Tape&, NodeId)> backward;
    bool needs_grad = false;
    Parameter<T>* param = nullptr;
  };

  NodeId push(Tensor<T> value, std::vector<NodeId> inputs,
              std::function<void(Tape&, NodeId)> backward, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace pie
